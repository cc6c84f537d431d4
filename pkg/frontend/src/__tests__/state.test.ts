import { describe, expect, it, vi } from "vitest";

import { Store } from "../state";
import type { AnswerDoc } from "../types";
import answerFixture from "./fixtures/answer.json";

const answer = answerFixture as unknown as AnswerDoc;

describe("Store", () => {
  it("applyAnswer mirrors the server-chosen clip as the active clip", () => {
    const store = new Store();
    store.applyAnswer(answer);
    expect(store.get().activeClip).toEqual(answer.chosen);
    expect(store.get().answer).toBe(answer);
  });

  it("notifies subscribers on update and supports unsubscribe", () => {
    const store = new Store();
    const listener = vi.fn();
    const unsubscribe = store.subscribe(listener);
    store.update({ playbackTime: 4 });
    expect(listener).toHaveBeenCalledTimes(1);
    expect(listener.mock.calls[0][0].playbackTime).toBe(4);
    unsubscribe();
    store.update({ playbackTime: 5 });
    expect(listener).toHaveBeenCalledTimes(1);
  });

  it("clears per-answer state when a new answer arrives", () => {
    const store = new Store();
    store.update({ hoveredNode: "n-1", selectedNode: "n-2" });
    store.applyAnswer(answer);
    expect(store.get().hoveredNode).toBeNull();
    expect(store.get().selectedNode).toBeNull();
  });
});
