/** Wire types, mirroring the server's JSON payloads field for field. */

export interface RoleInfo {
  role_name: string;
  role_description: string;
  traits: string[];
  emotional_signature: Record<string, number>;
}

export interface SessionSummary {
  session_id: string;
  role_name: string;
}

export interface Exchange {
  user: string;
  assistant: string;
}

export interface Transcript {
  session_id: string;
  role_name: string;
  turns: Exchange[];
}

export interface RetrievedChunk {
  chunk_id: string;
  score: number;
  text: string;
}

export interface TurnTrace {
  retrieved: RetrievedChunk[];
  prompt_rendered: string;
  temperature: number;
  top_p: number;
}

export interface TurnResponse {
  reply: string;
  trace: TurnTrace;
}

export interface DeleteResult {
  deleted: boolean;
}

/** Uniform error body: every non-2xx response carries {code, message}. */
export interface ErrorBody {
  code: string;
  message: string;
}
