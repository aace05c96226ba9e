/**
 * Quiz flow: fetch a question, collect one answer plus a liking rating,
 * submit, advance. One request is in flight at a time per session.
 *
 * The view never receives or renders correctness information; the server
 * keeps the key position to itself until the study is over.
 */

import { ApiError, NextQuestion, QuizApi } from "./api.js";

export type QuizPhase = "loading" | "question" | "submitting" | "complete" | "error";

export class QuizApp {
  private phase: QuizPhase = "loading";
  private current: NextQuestion | null = null;
  private selected: number | null = null;
  private liking = 50;
  private answered = 0;
  private message = "";
  private inFlight = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: QuizApi,
    private readonly session: string,
  ) {}

  async start(): Promise<void> {
    await this.loadNext();
  }

  getPhase(): QuizPhase {
    return this.phase;
  }

  private async loadNext(): Promise<void> {
    this.phase = "loading";
    this.render();
    try {
      const question = await this.api.nextQuestion(this.session);
      if (question.complete) {
        this.answered = question.progress?.answered ?? this.answered;
        this.phase = "complete";
      } else {
        this.current = question;
        this.answered = question.progress?.answered ?? this.answered;
        this.selected = null;
        this.liking = 50;
        this.phase = "question";
      }
    } catch (error) {
      this.message = error instanceof Error ? error.message : String(error);
      this.phase = "error";
    }
    this.render();
  }

  async submit(): Promise<void> {
    if (this.phase !== "question" || this.selected === null || this.inFlight) return;
    const question = this.current;
    if (!question || !question.mcq_id) return;
    this.inFlight = true;
    this.phase = "submitting";
    this.render();
    try {
      await this.api.submitResponse(this.session, question.mcq_id, this.selected, this.liking);
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        // Already answered (e.g. a retried submission): advance, never double-count.
        this.message = "Already answered; moving on.";
      } else {
        this.message = error instanceof Error ? error.message : String(error);
        this.phase = "error";
        this.inFlight = false;
        this.render();
        return;
      }
    }
    this.inFlight = false;
    await this.loadNext();
  }

  selectOption(index: number): void {
    if (this.phase !== "question") return;
    this.selected = index;
    this.render();
  }

  setLiking(value: number): void {
    this.liking = Math.max(0, Math.min(100, Math.round(value)));
    const label = this.root.querySelector<HTMLElement>("[data-role=liking-value]");
    if (label) label.textContent = `${this.liking}%`;
  }

  retry(): void {
    void this.loadNext();
  }

  render(): void {
    switch (this.phase) {
      case "loading":
        this.root.innerHTML = `<main class="quiz"><p class="status">Loading…</p></main>`;
        return;
      case "error":
        this.root.innerHTML = `
          <main class="quiz">
            <p class="status error-text">${escapeHtml(this.message)}</p>
            <button data-role="retry">Try again</button>
          </main>`;
        this.root
          .querySelector("[data-role=retry]")
          ?.addEventListener("click", () => this.retry());
        return;
      case "complete":
        this.root.innerHTML = `
          <main class="quiz">
            <h1>All done, thank you!</h1>
            <p class="status">You answered ${this.answered} question${this.answered === 1 ? "" : "s"} this session.</p>
          </main>`;
        return;
      case "question":
      case "submitting":
        this.renderQuestion();
        return;
    }
  }

  private renderQuestion(): void {
    const question = this.current;
    if (!question || !question.options || !question.stem) return;
    const progress = question.progress
      ? `${question.progress.answered + 1} of ${question.progress.total}`
      : "";
    const submitting = this.phase === "submitting";
    const optionsHtml = question.options
      .map(
        (option, index) => `
        <label class="option">
          <input type="radio" name="option" value="${index}"
                 ${this.selected === index ? "checked" : ""}
                 ${submitting ? "disabled" : ""}>
          <span>${escapeHtml(option)}</span>
        </label>`,
      )
      .join("");
    this.root.innerHTML = `
      <main class="quiz">
        <p class="progress" data-role="progress">${progress}</p>
        <h1 class="stem" data-role="stem">${escapeHtml(question.stem)}</h1>
        <fieldset class="options" data-role="options" ${submitting ? "disabled" : ""}>
          ${optionsHtml}
        </fieldset>
        <div class="liking">
          <label for="liking">How much do you like this question?</label>
          <input id="liking" data-role="liking" type="range" min="0" max="100"
                 value="${this.liking}" ${submitting ? "disabled" : ""}>
          <span data-role="liking-value">${this.liking}%</span>
        </div>
        <button data-role="submit" ${this.selected === null || submitting ? "disabled" : ""}>
          ${submitting ? "Submitting…" : "Submit answer"}
        </button>
        ${this.message ? `<p class="status">${escapeHtml(this.message)}</p>` : ""}
      </main>`;
    this.message = "";
    this.root.querySelectorAll<HTMLInputElement>("input[name=option]").forEach((input) => {
      input.addEventListener("change", () => this.selectOption(Number(input.value)));
    });
    this.root
      .querySelector<HTMLInputElement>("[data-role=liking]")
      ?.addEventListener("input", (event) => {
        this.setLiking(Number((event.target as HTMLInputElement).value));
      });
    this.root
      .querySelector("[data-role=submit]")
      ?.addEventListener("click", () => void this.submit());
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
