/** Browser entry point: wires the chat page to the HTTP service.
 *
 * State is deliberately small: one session at a time, one in-flight turn
 * at a time. The send button is disabled while a turn is pending, so the
 * server never sees interleaved turns from the same page.
 */

import { ApiClient, ApiError } from "./api.js";
import { escapeHtml, formatScore, transcriptLines } from "./format.js";
import type { RetrievedChunk, RoleInfo } from "./types.js";

interface Elements {
  rolePicker: HTMLSelectElement;
  roleBlurb: HTMLElement;
  newSessionButton: HTMLButtonElement;
  sessionLabel: HTMLElement;
  chatLog: HTMLElement;
  tracePanel: HTMLElement;
  input: HTMLInputElement;
  sendButton: HTMLButtonElement;
  status: HTMLElement;
}

function grab(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.code}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

export class ChatApp {
  private readonly api: ApiClient;
  private readonly el: Elements;
  private roles: RoleInfo[] = [];
  private sessionId: string | null = null;
  private pending = false;

  constructor(api: ApiClient, el: Elements) {
    this.api = api;
    this.el = el;
    this.el.newSessionButton.addEventListener("click", () => void this.startSession());
    this.el.sendButton.addEventListener("click", () => void this.send());
    this.el.input.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        event.preventDefault();
        void this.send();
      }
    });
    this.el.rolePicker.addEventListener("change", () => this.showRoleBlurb());
  }

  async init(): Promise<void> {
    try {
      this.roles = await this.api.listRoles();
    } catch (err) {
      this.setStatus(`cannot reach server: ${describeError(err)}`);
      return;
    }
    this.el.rolePicker.innerHTML = "";
    for (const role of this.roles) {
      const option = document.createElement("option");
      option.value = role.role_name;
      option.textContent = role.role_name;
      this.el.rolePicker.appendChild(option);
    }
    this.showRoleBlurb();
    this.setStatus(this.roles.length ? "pick a character and start a session" : "no roles served");
  }

  private showRoleBlurb(): void {
    const role = this.roles.find((r) => r.role_name === this.el.rolePicker.value);
    if (!role) {
      this.el.roleBlurb.textContent = "";
      return;
    }
    const traits = role.traits.length ? ` — ${role.traits.join(", ")}` : "";
    this.el.roleBlurb.textContent = `${role.role_description}${traits}`;
  }

  private setStatus(text: string): void {
    this.el.status.textContent = text;
  }

  private appendLine(cssClass: string, html: string): void {
    const row = document.createElement("div");
    row.className = cssClass;
    row.innerHTML = html;
    this.el.chatLog.appendChild(row);
    this.el.chatLog.scrollTop = this.el.chatLog.scrollHeight;
  }

  private renderTrace(retrieved: RetrievedChunk[]): void {
    this.el.tracePanel.innerHTML = "";
    if (!retrieved.length) {
      this.el.tracePanel.textContent = "(no retrieval for this turn)";
      return;
    }
    for (const chunk of retrieved) {
      const row = document.createElement("div");
      row.className = "trace-row";
      row.innerHTML =
        `<span class="trace-id">${escapeHtml(chunk.chunk_id)}</span>` +
        ` <span class="trace-score">${formatScore(chunk.score)}</span>` +
        `<div class="trace-text">${escapeHtml(chunk.text)}</div>`;
      this.el.tracePanel.appendChild(row);
    }
  }

  async startSession(): Promise<void> {
    const roleName = this.el.rolePicker.value;
    if (!roleName) {
      this.setStatus("no role selected");
      return;
    }
    if (this.sessionId) {
      try {
        await this.api.deleteSession(this.sessionId);
      } catch {
        // A stale session is harmless; the server reaps nothing else.
      }
    }
    try {
      const session = await this.api.createSession(roleName);
      this.sessionId = session.session_id;
      this.el.chatLog.innerHTML = "";
      this.el.tracePanel.innerHTML = "";
      this.el.sessionLabel.textContent = `session ${session.session_id}`;
      this.setStatus(`talking to ${session.role_name}`);
      this.el.input.focus();
    } catch (err) {
      this.setStatus(describeError(err));
    }
  }

  async send(): Promise<void> {
    const text = this.el.input.value.trim();
    if (!text || this.pending) {
      return;
    }
    if (!this.sessionId) {
      this.setStatus("start a session first");
      return;
    }
    this.pending = true;
    this.el.sendButton.disabled = true;
    this.appendLine("line-user", `<b>you:</b> ${escapeHtml(text)}`);
    this.el.input.value = "";
    try {
      const turn = await this.api.sendTurn(this.sessionId, text);
      const role = escapeHtml(this.el.rolePicker.value);
      this.appendLine("line-assistant", `<b>${role}:</b> ${escapeHtml(turn.reply)}`);
      this.renderTrace(turn.trace.retrieved);
      this.setStatus(
        `temperature ${turn.trace.temperature} · top_p ${turn.trace.top_p} · ` +
          `${turn.trace.retrieved.length} chunk(s) retrieved`,
      );
    } catch (err) {
      this.appendLine("line-error", escapeHtml(describeError(err)));
      this.setStatus("turn failed; the conversation is unchanged — try again");
    } finally {
      this.pending = false;
      this.el.sendButton.disabled = false;
    }
  }

  /** Dumps the server-side transcript as plain text (used by the copy button). */
  async transcriptText(): Promise<string> {
    if (!this.sessionId) {
      return "";
    }
    const transcript = await this.api.getTranscript(this.sessionId);
    return transcriptLines(transcript.role_name, transcript.turns).join("\n");
  }
}

function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("server") ?? window.location.origin;
  const app = new ChatApp(new ApiClient(base), {
    rolePicker: grab("role-picker") as HTMLSelectElement,
    roleBlurb: grab("role-blurb"),
    newSessionButton: grab("new-session") as HTMLButtonElement,
    sessionLabel: grab("session-label"),
    chatLog: grab("chat-log"),
    tracePanel: grab("trace-panel"),
    input: grab("chat-input") as HTMLInputElement,
    sendButton: grab("send-button") as HTMLButtonElement,
    status: grab("status-line"),
  });
  void app.init();
}

// Only run in a real page; importing this module from tests or Node is safe.
if (typeof document !== "undefined" && document.getElementById("chat-log")) {
  bootstrap();
}
