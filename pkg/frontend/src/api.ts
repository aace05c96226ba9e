/**
 * Typed client for the quiz/response HTTP API.
 *
 * The server never sends correctness information before (or after) a
 * submission; these types intentionally have no field for it.
 */

export interface Progress {
  answered: number;
  total: number;
}

export interface NextQuestion {
  complete: boolean;
  mcq_id?: string;
  stem?: string;
  options?: string[];
  progress?: Progress;
}

export interface SubmissionAck {
  recorded: boolean;
  mcq_id: string;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(detail, response.status);
}

export class QuizApi {
  constructor(private readonly baseUrl: string = "") {}

  async nextQuestion(session: string): Promise<NextQuestion> {
    const url = `${this.baseUrl}/api/quiz/next?session=${encodeURIComponent(session)}`;
    const response = await fetch(url);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as NextQuestion;
  }

  /**
   * Submit one answer. A client-generated reference makes timeout retries
   * idempotent: the server deduplicates on (session, question), so a retried
   * submission surfaces as a 409 conflict, which callers treat as answered.
   */
  async submitResponse(
    session: string,
    mcqId: string,
    option: number,
    liking?: number,
    clientRef?: string,
  ): Promise<SubmissionAck> {
    const body: Record<string, unknown> = {
      session,
      mcq_id: mcqId,
      option,
      client_ref: clientRef ?? makeClientRef(),
    };
    if (liking !== undefined) body.liking = liking;
    const response = await fetch(`${this.baseUrl}/api/response`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as SubmissionAck;
  }
}

export function makeClientRef(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return `ref-${Date.now()}-${Math.floor(Math.random() * 1e9)}`;
}
