import { describe, expect, it } from "vitest";

import { escapeHtml, formatScore, traceLines, transcriptLines } from "../src/format.js";
import type { RetrievedChunk } from "../src/types.js";

describe("formatScore", () => {
  it("always renders four decimals", () => {
    expect(formatScore(0.87654321)).toBe("0.8765");
    expect(formatScore(1)).toBe("1.0000");
    expect(formatScore(0)).toBe("0.0000");
    expect(formatScore(-1)).toBe("-1.0000");
    expect(formatScore(0.00009)).toBe("0.0001");
  });

  it("does not pad or trim beyond four decimals", () => {
    expect(formatScore(0.5)).toBe("0.5000");
    expect(formatScore(0.123456789)).toBe("0.1235");
  });
});

describe("traceLines", () => {
  const retrieved: RetrievedChunk[] = [
    { chunk_id: "script:r01:0001", score: 0.91234567, text: "甲" },
    { chunk_id: "profile:蒋飞:0000", score: 0.5, text: "乙" },
    { chunk_id: "script:r02:0000", score: -0.25, text: "丙" },
  ];

  it("keeps the server's order and formats each score", () => {
    expect(traceLines(retrieved)).toEqual([
      "script:r01:0001 · 0.9123",
      "profile:蒋飞:0000 · 0.5000",
      "script:r02:0000 · -0.2500",
    ]);
  });

  it("renders an empty list as no lines", () => {
    expect(traceLines([])).toEqual([]);
  });
});

describe("transcriptLines", () => {
  it("emits one user and one assistant line per exchange", () => {
    const lines = transcriptLines("蒋飞", [
      { user: "你好", assistant: "你好啊" },
      { user: "去打球吗", assistant: "走啊" },
    ]);
    expect(lines).toEqual(["you: 你好", "蒋飞: 你好啊", "you: 去打球吗", "蒋飞: 走啊"]);
  });

  it("handles an empty transcript", () => {
    expect(transcriptLines("蒋飞", [])).toEqual([]);
  });
});

describe("escapeHtml", () => {
  it("escapes markup-significant characters", () => {
    expect(escapeHtml(`<b a="1" b='2'>&</b>`)).toBe(
      "&lt;b a=&quot;1&quot; b=&#39;2&#39;&gt;&amp;&lt;/b&gt;",
    );
  });

  it("leaves plain multilingual text alone", () => {
    expect(escapeHtml("蒋飞 says hi")).toBe("蒋飞 says hi");
  });
});
