/**
 * In-test stand-in for the response service, implementing the same contract:
 * least-answered-first serving, per-(session, question) option order,
 * server-side correctness, duplicate rejection with 409, and stats.
 */

export interface MockQuestion {
  mcqId: string;
  stem: string;
  key: string;
  distractors: [string, string, string];
}

interface StoredResponse {
  session: string;
  mcqId: string;
  option: number;
  correct: boolean;
  liking?: number;
}

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** Deterministic permutation of 0..3 from a string seed. */
function permutation(seed: string): number[] {
  let h = 2166136261;
  for (const ch of seed) {
    h ^= ch.charCodeAt(0);
    h = Math.imul(h, 16777619) >>> 0;
  }
  const order = [0, 1, 2, 3];
  for (let i = 3; i > 0; i--) {
    h = Math.imul(h ^ (h >>> 13), 2654435761) >>> 0;
    const j = h % (i + 1);
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

export class MockServer {
  readonly responses: StoredResponse[] = [];
  private readonly answered = new Set<string>();
  failNextSubmit = false;

  constructor(private readonly questions: MockQuestion[]) {}

  optionsFor(session: string, mcqId: string): { options: string[]; keyPosition: number } {
    const question = this.questions.find((q) => q.mcqId === mcqId);
    if (!question) throw new Error(`unknown question ${mcqId}`);
    const names = [question.key, ...question.distractors];
    const order = permutation(`${session}:${mcqId}`);
    const options = order.map((i) => names[i]);
    return { options, keyPosition: order.indexOf(0) };
  }

  countFor(mcqId: string): number {
    return this.responses.filter((r) => r.mcqId === mcqId).length;
  }

  handle(url: string, init?: RequestInit): Response {
    const parsed = new URL(url, "http://mock.test");
    if (parsed.pathname === "/api/quiz/next") {
      return this.next(parsed.searchParams.get("session") ?? "");
    }
    if (parsed.pathname === "/api/response" && init?.method === "POST") {
      return this.submit(JSON.parse(String(init.body)));
    }
    const statsMatch = parsed.pathname.match(/^\/api\/mcq\/(.+)\/stats$/);
    if (statsMatch) {
      return this.stats(decodeURIComponent(statsMatch[1]));
    }
    return jsonResponse(404, { detail: `no route for ${parsed.pathname}` });
  }

  private next(session: string): Response {
    const remaining = this.questions.filter((q) => !this.answered.has(`${session}:${q.mcqId}`));
    const answeredCount = this.questions.length - remaining.length;
    if (remaining.length === 0) {
      return jsonResponse(200, {
        complete: true,
        progress: { answered: answeredCount, total: this.questions.length },
      });
    }
    const chosen = [...remaining].sort(
      (a, b) => this.countFor(a.mcqId) - this.countFor(b.mcqId) || a.mcqId.localeCompare(b.mcqId),
    )[0];
    const { options } = this.optionsFor(session, chosen.mcqId);
    return jsonResponse(200, {
      complete: false,
      mcq_id: chosen.mcqId,
      stem: chosen.stem,
      options,
      progress: { answered: answeredCount, total: this.questions.length },
    });
  }

  private submit(body: {
    session: string;
    mcq_id: string;
    option: number;
    liking?: number;
  }): Response {
    if (this.failNextSubmit) {
      this.failNextSubmit = false;
      return jsonResponse(500, { detail: "injected server failure" });
    }
    const pair = `${body.session}:${body.mcq_id}`;
    if (!this.questions.some((q) => q.mcqId === body.mcq_id)) {
      return jsonResponse(404, { detail: `unknown question id '${body.mcq_id}'` });
    }
    if (this.answered.has(pair)) {
      return jsonResponse(409, { detail: `session already answered '${body.mcq_id}'` });
    }
    const { keyPosition } = this.optionsFor(body.session, body.mcq_id);
    this.answered.add(pair);
    this.responses.push({
      session: body.session,
      mcqId: body.mcq_id,
      option: body.option,
      correct: body.option === keyPosition,
      liking: body.liking,
    });
    return jsonResponse(200, { recorded: true, mcq_id: body.mcq_id });
  }

  private stats(mcqId: string): Response {
    const relevant = this.responses.filter((r) => r.mcqId === mcqId);
    const incorrect = relevant.filter((r) => !r.correct).length;
    const likings = relevant.filter((r) => r.liking !== undefined).map((r) => r.liking as number);
    return jsonResponse(200, {
      mcq_id: mcqId,
      responses: relevant.length,
      incorrect_rate: relevant.length ? incorrect / relevant.length : null,
      mean_liking: likings.length
        ? likings.reduce((a, b) => a + b, 0) / likings.length / 100
        : null,
    });
  }

  install(): void {
    globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = typeof input === "string" ? input : input instanceof URL ? input.href : input.url;
      return this.handle(url, init);
    }) as typeof fetch;
  }
}

export function makeQuestions(n: number): MockQuestion[] {
  return Array.from({ length: n }, (_, i) => ({
    mcqId: `m${i}`,
    stem: `Question number ${i}, which entity fits?`,
    key: `Key${i}`,
    distractors: [`D${i}a`, `D${i}b`, `D${i}c`] as [string, string, string],
  }));
}
