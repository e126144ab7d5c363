import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

interface RecordedCall {
  url: string;
  init?: RequestInit;
}

function stubFetch(...responses: Response[]): RecordedCall[] {
  const calls: RecordedCall[] = [];
  const queue = [...responses];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string | URL | Request, init?: RequestInit) => {
      calls.push({ url: String(url), init });
      const next = queue.shift();
      if (!next) {
        throw new Error("unexpected extra fetch call");
      }
      return next;
    }),
  );
  return calls;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("strips trailing slashes from the base url", async () => {
    const calls = stubFetch(jsonResponse([]));
    await new ApiClient("http://127.0.0.1:8000///").listRoles();
    expect(calls[0]?.url).toBe("http://127.0.0.1:8000/roles");
  });

  it("lists roles with a plain GET", async () => {
    const roles = [
      {
        role_name: "蒋飞",
        role_description: "高中生",
        traits: ["幽默"],
        emotional_signature: { Happiness: 1 },
      },
    ];
    const calls = stubFetch(jsonResponse(roles));
    const got = await new ApiClient("http://x").listRoles();
    expect(got).toEqual(roles);
    expect(calls[0]?.init?.method).toBeUndefined();
  });

  it("creates sessions with a JSON POST body", async () => {
    const calls = stubFetch(jsonResponse({ session_id: "abc", role_name: "蒋飞" }, 201));
    const session = await new ApiClient("http://x").createSession("蒋飞");
    expect(session.session_id).toBe("abc");
    expect(calls[0]?.url).toBe("http://x/sessions");
    expect(calls[0]?.init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({ role_name: "蒋飞" });
  });

  it("passes max_history_turns only when given", async () => {
    const calls = stubFetch(
      jsonResponse({ session_id: "a", role_name: "r" }, 201),
      jsonResponse({ session_id: "b", role_name: "r" }, 201),
    );
    const client = new ApiClient("http://x");
    await client.createSession("r");
    await client.createSession("r", 5);
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({ role_name: "r" });
    expect(JSON.parse(String(calls[1]?.init?.body))).toEqual({
      role_name: "r",
      max_history_turns: 5,
    });
  });

  it("sends turns and returns the parsed trace", async () => {
    const payload = {
      reply: "走啊",
      trace: {
        retrieved: [{ chunk_id: "script:r01:0000", score: 0.25, text: "甲" }],
        prompt_rendered: "prompt",
        temperature: 0.95,
        top_p: 0.7,
      },
    };
    const calls = stubFetch(jsonResponse(payload));
    const turn = await new ApiClient("http://x").sendTurn("sid", "去打球吗");
    expect(turn).toEqual(payload);
    expect(calls[0]?.url).toBe("http://x/sessions/sid/turns");
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({ text: "去打球吗" });
  });

  it("url-encodes session ids", async () => {
    const calls = stubFetch(jsonResponse({ session_id: "a/b", role_name: "r", turns: [] }));
    await new ApiClient("http://x").getTranscript("a/b");
    expect(calls[0]?.url).toBe("http://x/sessions/a%2Fb");
  });

  it("deletes sessions with DELETE", async () => {
    const calls = stubFetch(jsonResponse({ deleted: true }));
    const result = await new ApiClient("http://x").deleteSession("sid");
    expect(result.deleted).toBe(true);
    expect(calls[0]?.init?.method).toBe("DELETE");
  });

  it("maps the uniform error body onto ApiError", async () => {
    stubFetch(jsonResponse({ code: "not_found", message: "unknown role: '路人甲'" }, 404));
    const err = await new ApiClient("http://x")
      .createSession("路人甲")
      .then(() => null)
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    const apiErr = err as ApiError;
    expect(apiErr.status).toBe(404);
    expect(apiErr.code).toBe("not_found");
    expect(apiErr.message).toBe("unknown role: '路人甲'");
  });

  it("survives non-JSON error bodies", async () => {
    stubFetch(new Response("<html>boom</html>", { status: 500 }));
    const err = await new ApiClient("http://x")
      .listRoles()
      .then(() => null)
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    const apiErr = err as ApiError;
    expect(apiErr.status).toBe(500);
    expect(apiErr.code).toBe("unknown_error");
    expect(apiErr.message).toBe("HTTP 500");
  });
});
