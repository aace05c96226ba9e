import { beforeEach, describe, expect, it } from "vitest";

import { QuizApi } from "../src/api.js";
import { QuizApp } from "../src/quiz.js";
import { MockServer, makeQuestions } from "./mock-server.js";

function mount(): HTMLElement {
  document.body.innerHTML = '<div id="app"></div>';
  return document.getElementById("app") as HTMLElement;
}

async function settle(): Promise<void> {
  // Drain the microtask queue a few times so render/fetch chains finish.
  for (let i = 0; i < 8; i++) await Promise.resolve();
}

function assertNoCorrectnessHints(root: HTMLElement, keyName: string | null): void {
  const html = root.innerHTML.toLowerCase();
  expect(html).not.toContain("correct");
  expect(html).not.toContain("wrong");
  expect(html).not.toContain("data-key");
  if (keyName) {
    // The key appears only as one of four visually identical options.
    const options = [...root.querySelectorAll(".option")];
    const flagged = options.filter(
      (el) => el.className !== "option" || el.getAttribute("data-answer") !== null,
    );
    expect(flagged).toHaveLength(0);
  }
}

async function answerCurrent(
  app: QuizApp,
  root: HTMLElement,
  server: MockServer,
  session: string,
  pickKey: boolean,
  liking: number,
): Promise<void> {
  const mcqId = root.innerHTML.match(/Question number (\d+)/)![1];
  const { options, keyPosition } = server.optionsFor(session, `m${mcqId}`);
  expect([...root.querySelectorAll(".option span")].map((el) => el.textContent)).toEqual(options);
  assertNoCorrectnessHints(root, options[keyPosition]);

  const pick = pickKey ? keyPosition : (keyPosition + 1) % 4;
  const radios = root.querySelectorAll<HTMLInputElement>("input[name=option]");
  radios[pick].click();
  await settle();

  const slider = root.querySelector<HTMLInputElement>("[data-role=liking]")!;
  slider.value = String(liking);
  slider.dispatchEvent(new Event("input", { bubbles: true }));
  app.setLiking(liking);

  const submit = root.querySelector<HTMLButtonElement>("[data-role=submit]")!;
  expect(submit.disabled).toBe(false);
  submit.click();
  await settle();
}

describe("scripted quiz session", () => {
  let server: MockServer;
  let root: HTMLElement;
  let app: QuizApp;
  const session = "scripted-session";

  beforeEach(() => {
    server = new MockServer(makeQuestions(5));
    server.install();
    root = mount();
    app = new QuizApp(root, new QuizApi(), session);
  });

  it("answers 5 questions with liking; server stats match the hand count", async () => {
    await app.start();
    await settle();

    const pickKeyPlan = [true, false, true, true, false]; // 2 wrong by hand count
    for (let i = 0; i < 5; i++) {
      expect(app.getPhase()).toBe("question");
      await answerCurrent(app, root, server, session, pickKeyPlan[i], 40 + i * 10);
    }

    expect(app.getPhase()).toBe("complete");
    expect(root.textContent).toContain("5 questions");

    expect(server.responses).toHaveLength(5);
    let totalResponses = 0;
    let totalIncorrect = 0;
    for (let i = 0; i < 5; i++) {
      const stats = await (server.handle(`/api/mcq/m${i}/stats`) as Response).json();
      totalResponses += stats.responses;
      if (stats.responses > 0) {
        totalIncorrect += Math.round(stats.incorrect_rate * stats.responses);
      }
    }
    expect(totalResponses).toBe(5);
    expect(totalIncorrect).toBe(2); // matches the two non-key picks above

    const likings = server.responses.map((r) => r.liking);
    expect(likings).toEqual([40, 50, 60, 70, 80]);
  });

  it("never renders correctness information before submission", async () => {
    await app.start();
    await settle();
    for (let step = 0; step < 3; step++) {
      const html = root.innerHTML.toLowerCase();
      expect(html).not.toContain("correct");
      expect(html).not.toContain("answer is");
      const mcqId = root.innerHTML.match(/Question number (\d+)/)![1];
      const { options, keyPosition } = server.optionsFor(session, `m${mcqId}`);
      // The rendered option list is exactly what the server sent: no extra
      // attributes, classes, or ordering hints on the key option.
      const optionNodes = [...root.querySelectorAll<HTMLElement>(".option")];
      expect(optionNodes.map((el) => el.querySelector("span")!.textContent)).toEqual(options);
      const normalize = (el: HTMLElement, label: string) =>
        el.outerHTML.replace(label, "X").replace(/value="\d"/, 'value="i"');
      const keyNode = optionNodes[keyPosition];
      const otherNode = optionNodes[(keyPosition + 1) % 4];
      expect(normalize(keyNode, options[keyPosition])).toBe(
        normalize(otherNode, options[(keyPosition + 1) % 4]),
      );
      await answerCurrent(app, root, server, session, step % 2 === 0, 50);
    }
  });

  it("rejects duplicate submissions server-side and advances without double-count", async () => {
    await app.start();
    await settle();
    const first = await (server.handle(`/api/quiz/next?session=${session}`) as Response).json();

    // Answer legitimately through the UI.
    await answerCurrent(app, root, server, session, true, 55);
    expect(server.responses).toHaveLength(1);

    // A retried submission for the same question conflicts and is not stored.
    const duplicate = server.handle("/api/response", {
      method: "POST",
      body: JSON.stringify({ session, mcq_id: first.mcq_id, option: 0 }),
    });
    expect(duplicate.status).toBe(409);
    expect(server.responses).toHaveLength(1);

    // The app carried on to the next question.
    expect(app.getPhase()).toBe("question");
  });

  it("handles a duplicate conflict during submit by advancing", async () => {
    await app.start();
    await settle();
    const current = root.innerHTML.match(/Question number (\d+)/)![1];
    // Simulate the answer landing server-side before the client's retry.
    const { keyPosition } = server.optionsFor(session, `m${current}`);
    server.handle("/api/response", {
      method: "POST",
      body: JSON.stringify({ session, mcq_id: `m${current}`, option: keyPosition }),
    });
    await answerCurrent(app, root, server, session, true, 50);
    expect(server.responses).toHaveLength(1); // no double count
    expect(app.getPhase()).toBe("question"); // advanced to the next one
  });

  it("shows a retry affordance on server failure and recovers", async () => {
    await app.start();
    await settle();
    server.failNextSubmit = true;
    await answerCurrent(app, root, server, session, true, 50);
    expect(app.getPhase()).toBe("error");
    expect(root.querySelector("[data-role=retry]")).not.toBeNull();
    (root.querySelector("[data-role=retry]") as HTMLButtonElement).click();
    await settle();
    expect(app.getPhase()).toBe("question");
  });

  it("submit stays disabled until an option is chosen", async () => {
    await app.start();
    await settle();
    const submit = root.querySelector<HTMLButtonElement>("[data-role=submit]")!;
    expect(submit.disabled).toBe(true);
    root.querySelectorAll<HTMLInputElement>("input[name=option]")[2].click();
    await settle();
    expect(root.querySelector<HTMLButtonElement>("[data-role=submit]")!.disabled).toBe(false);
  });

  it("liking slider renders as a percentage", async () => {
    await app.start();
    await settle();
    app.setLiking(66);
    expect(root.querySelector("[data-role=liking-value]")!.textContent).toBe("66%");
  });
});
