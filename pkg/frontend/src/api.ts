/** Typed client for the chat service. Pure fetch, no framework. */

import type {
  DeleteResult,
  RoleInfo,
  SessionSummary,
  Transcript,
  TurnResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) {
    return;
  }
  let code = "unknown_error";
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { code?: string; message?: string };
    if (typeof body.code === "string") {
      code = body.code;
    }
    if (typeof body.message === "string") {
      message = body.message;
    }
  } catch {
    // Non-JSON error body; keep the generic message.
  }
  throw new ApiError(response.status, code, message);
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, init);
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listRoles(): Promise<RoleInfo[]> {
    return this.request<RoleInfo[]>("/roles");
  }

  createSession(roleName: string, maxHistoryTurns?: number): Promise<SessionSummary> {
    const body: Record<string, unknown> = { role_name: roleName };
    if (maxHistoryTurns !== undefined) {
      body["max_history_turns"] = maxHistoryTurns;
    }
    return this.post<SessionSummary>("/sessions", body);
  }

  getTranscript(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  deleteSession(sessionId: string): Promise<DeleteResult> {
    return this.request<DeleteResult>(`/sessions/${encodeURIComponent(sessionId)}`, {
      method: "DELETE",
    });
  }

  sendTurn(sessionId: string, text: string): Promise<TurnResponse> {
    return this.post<TurnResponse>(`/sessions/${encodeURIComponent(sessionId)}/turns`, {
      text,
    });
  }
}
