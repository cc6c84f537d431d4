import { beforeEach, describe, expect, it, vi } from "vitest";

import { renderChat, showUngroundedBadge, Tooltip } from "../chat";
import type { AnswerDoc, GraphDoc } from "../types";
import answerFixture from "./fixtures/answer.json";
import neighborhoodFixture from "./fixtures/neighborhood.json";

const answer = answerFixture as unknown as AnswerDoc;

let container: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="chat"></div>';
  container = document.getElementById("chat")!;
});

describe("renderChat", () => {
  it("renders one highlight per annotation with the server color", () => {
    renderChat(container, answer);
    const marks = [...container.querySelectorAll<HTMLElement>("mark.entity")];
    expect(marks.length).toBe(answer.annotations.length);
    const byNode = new Map(answer.annotations.map((a) => [`${a.start}`, a]));
    for (const mark of marks) {
      const annotation = byNode.get(mark.dataset.start!)!;
      expect(annotation).toBeDefined();
      expect(mark.style.backgroundColor).toBe(hexToCss(annotation.color));
      expect(mark.textContent).toBe(
        answer.narrative.slice(annotation.start, annotation.end),
      );
    }
  });

  it("highlights are disjoint and in document order", () => {
    renderChat(container, answer);
    const marks = [...container.querySelectorAll<HTMLElement>("mark.entity")];
    let cursor = 0;
    for (const mark of marks) {
      const start = Number(mark.dataset.start);
      const end = Number(mark.dataset.end);
      expect(start).toBeGreaterThanOrEqual(cursor);
      expect(end).toBeGreaterThan(start);
      cursor = end;
    }
    // never nested: no mark contains another mark
    for (const mark of marks) {
      expect(mark.querySelector("mark")).toBeNull();
    }
  });

  it("every highlight color is one of the five legend colors", () => {
    renderChat(container, answer);
    const legendColors = new Set(answer.legend.map((entry) => hexToCss(entry.color)));
    expect(legendColors.size).toBe(5);
    for (const mark of container.querySelectorAll<HTMLElement>("mark.entity")) {
      expect(legendColors.has(mark.style.backgroundColor)).toBe(true);
    }
  });

  it("renders the five-category legend and the confidence band", () => {
    renderChat(container, answer);
    const legendItems = container.querySelectorAll(".legend li");
    expect(legendItems.length).toBe(5);
    const categories = [...legendItems].map((item) => (item as HTMLElement).dataset.category);
    expect(categories).toEqual(answer.legend.map((entry) => entry.category));
    expect(container.querySelector(".confidence")!.textContent).toContain(
      answer.confidence_band,
    );
  });

  it("lists related clips as links", () => {
    renderChat(container, answer);
    const links = container.querySelectorAll(".related-clips a");
    expect(links.length).toBe(answer.related.length);
  });

  it("renders narrative text losslessly around the highlights", () => {
    renderChat(container, answer);
    const narrative = container.querySelector(".narrative")!;
    expect(narrative.textContent).toBe(answer.narrative);
  });

  it("falls back to plain text on malformed annotations", () => {
    const malformed: AnswerDoc = {
      ...answer,
      annotations: [
        { start: 5, end: 3, node_id: "n", color: "#000000", class_id: "x" },
      ],
    };
    renderChat(container, malformed);
    const narrative = container.querySelector<HTMLElement>(".narrative")!;
    expect(narrative.dataset.fallback).toBe("plain");
    expect(narrative.textContent).toBe(answer.narrative);
    expect(container.querySelector("mark")).toBeNull();
  });

  it("renders a plain narrative when there are no entities", () => {
    const empty: AnswerDoc = { ...answer, annotations: [] };
    renderChat(container, empty);
    expect(container.querySelector("mark")).toBeNull();
    expect(container.querySelector(".narrative")!.textContent).toBe(answer.narrative);
    expect(container.querySelectorAll(".legend li").length).toBe(5);
  });

  it("dispatches entity click and hover handlers", () => {
    const onEntityClick = vi.fn();
    const onEntityHover = vi.fn();
    renderChat(container, answer, { onEntityClick, onEntityHover });
    const mark = container.querySelector<HTMLElement>("mark.entity")!;
    mark.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    expect(onEntityClick).toHaveBeenCalledWith(mark.dataset.nodeId);
    mark.dispatchEvent(new MouseEvent("mouseenter"));
    expect(onEntityHover).toHaveBeenCalled();
  });
});

describe("ungrounded badge", () => {
  it("appears on the mention and never duplicates", () => {
    renderChat(container, answer);
    const ungrounded = answer.graph.nodes.find((n) => n.grounding.kind === "ungrounded")!;
    showUngroundedBadge(container, ungrounded.node_id);
    showUngroundedBadge(container, ungrounded.node_id);
    const badges = container.querySelectorAll(".ungrounded-badge");
    expect(badges.length).toBe(1);
    expect(badges[0].textContent).toBe("ungrounded");
  });
});

describe("tooltip", () => {
  it("shows the radius-1 neighborhood with relation labels", async () => {
    const api = {
      neighborhood: vi.fn().mockResolvedValue(neighborhoodFixture as unknown as GraphDoc),
    };
    const tooltip = new Tooltip(api, container);
    renderChat(container, answer);
    const suv = answer.graph.nodes.find((n) => n.class_id === "motorized_vehicle")!;
    const mark = container.querySelector<HTMLElement>(`mark[data-node-id="${suv.node_id}"]`)!;
    await tooltip.show(answer, suv.node_id, mark);
    expect(api.neighborhood).toHaveBeenCalledWith(answer.answer_id, suv.node_id, 1);
    const popover = container.querySelector(".tooltip")!;
    const labels = [...popover.querySelectorAll(".relations li")].map(
      (item) => (item as HTMLElement).dataset.label,
    );
    const expected = (neighborhoodFixture as unknown as GraphDoc).edges.map((e) => e.label);
    expect(labels).toEqual(expected);
    expect(popover.textContent).toContain(suv.canonical_label);
  });

  it("dismisses on hide", async () => {
    const api = {
      neighborhood: vi.fn().mockResolvedValue(neighborhoodFixture as unknown as GraphDoc),
    };
    const tooltip = new Tooltip(api, container);
    await tooltip.show(answer, answer.graph.nodes[0].node_id, container);
    expect(tooltip.visible).toBe(true);
    tooltip.hide();
    expect(tooltip.visible).toBe(false);
    expect(container.querySelector(".tooltip")).toBeNull();
  });

  it("renders an inline error chip when the fetch fails", async () => {
    const api = { neighborhood: vi.fn().mockRejectedValue(new Error("boom")) };
    const tooltip = new Tooltip(api, container);
    await tooltip.show(answer, answer.graph.nodes[0].node_id, container);
    expect(container.querySelector(".error-chip")!.textContent).toContain(
      "could not load",
    );
  });

  it("an isolated node shows no relations", async () => {
    const lonely: GraphDoc = {
      nodes: [
        {
          node_id: "n-lonely",
          class_id: "pole",
          canonical_label: "the pole",
          spans: [[0, 8]],
          attributes: {},
          grounding: { kind: "ungrounded", ref: null },
        },
      ],
      edges: [],
      dropped_mentions: 0,
      dropped_edges: 0,
    };
    const api = { neighborhood: vi.fn().mockResolvedValue(lonely) };
    const tooltip = new Tooltip(api, container);
    await tooltip.show(answer, "n-lonely", container);
    expect(container.querySelectorAll(".relations li").length).toBe(0);
  });
});

function hexToCss(hex: string): string {
  // jsdom normalizes style colors to rgb(...)
  const r = parseInt(hex.slice(1, 3), 16);
  const g = parseInt(hex.slice(3, 5), 16);
  const b = parseInt(hex.slice(5, 7), 16);
  return `rgb(${r}, ${g}, ${b})`;
}
