// Chat panel: the narrative answer with taxonomy-colored entity highlights,
// the five-category legend, the confidence chip, and graph tooltips.

import type { ApiClient } from "./api";
import type { AnnotationDoc, AnswerDoc, GraphDoc } from "./types";

export interface ChatHandlers {
  onEntityClick?: (nodeId: string) => void;
  onEntityHover?: (nodeId: string, element: HTMLElement) => void;
  onEntityLeave?: (nodeId: string) => void;
  onRelatedClick?: (videoId: string, clipIndex: number) => void;
}

function annotationsRenderable(narrative: string, annotations: AnnotationDoc[]): boolean {
  let cursor = 0;
  for (const ann of annotations) {
    if (ann.start < cursor || ann.end <= ann.start || ann.end > narrative.length) {
      return false;
    }
    cursor = ann.end;
  }
  return true;
}

export function renderChat(
  container: HTMLElement,
  answer: AnswerDoc,
  handlers: ChatHandlers = {},
): void {
  container.replaceChildren();
  container.classList.add("chat-message");

  const narrative = document.createElement("p");
  narrative.className = "narrative";
  const annotations = [...answer.annotations].sort((a, b) => a.start - b.start);

  if (!annotationsRenderable(answer.narrative, annotations)) {
    // render fallback: plain text when annotations are malformed
    narrative.textContent = answer.narrative;
    narrative.dataset.fallback = "plain";
    container.append(narrative);
  } else {
    const grounding = new Map(
      answer.graph.nodes.map((n) => [n.node_id, n.grounding.kind]),
    );
    let cursor = 0;
    for (const ann of annotations) {
      if (ann.start > cursor) {
        narrative.append(document.createTextNode(answer.narrative.slice(cursor, ann.start)));
      }
      const mark = document.createElement("mark");
      mark.className = "entity";
      mark.textContent = answer.narrative.slice(ann.start, ann.end);
      mark.style.backgroundColor = ann.color;
      mark.dataset.nodeId = ann.node_id;
      mark.dataset.classId = ann.class_id;
      mark.dataset.start = String(ann.start);
      mark.dataset.end = String(ann.end);
      mark.dataset.grounding = grounding.get(ann.node_id) ?? "ungrounded";
      mark.addEventListener("click", () => handlers.onEntityClick?.(ann.node_id));
      mark.addEventListener("mouseenter", () => handlers.onEntityHover?.(ann.node_id, mark));
      mark.addEventListener("mouseleave", () => handlers.onEntityLeave?.(ann.node_id));
      narrative.append(mark);
      cursor = ann.end;
    }
    if (cursor < answer.narrative.length) {
      narrative.append(document.createTextNode(answer.narrative.slice(cursor)));
    }
    container.append(narrative);
  }

  const meta = document.createElement("div");
  meta.className = "answer-meta";
  const confidence = document.createElement("span");
  confidence.className = `confidence confidence-${answer.confidence_band}`;
  confidence.textContent = `confidence: ${answer.confidence_band}`;
  meta.append(confidence);

  const related = document.createElement("ul");
  related.className = "related-clips";
  for (const hit of answer.related) {
    const item = document.createElement("li");
    const link = document.createElement("a");
    link.href = "#";
    link.textContent = `${hit.video_id}:${hit.clip_index} (${hit.start_s.toFixed(0)}s)`;
    link.dataset.videoId = hit.video_id;
    link.dataset.clipIndex = String(hit.clip_index);
    link.addEventListener("click", (event) => {
      event.preventDefault();
      handlers.onRelatedClick?.(hit.video_id, hit.clip_index);
    });
    item.append(link);
    related.append(item);
  }
  meta.append(related);
  container.append(meta);

  const legend = document.createElement("ul");
  legend.className = "legend";
  for (const entry of answer.legend) {
    const item = document.createElement("li");
    item.dataset.category = entry.category;
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.backgroundColor = entry.color;
    item.append(swatch, document.createTextNode(entry.category));
    legend.append(item);
  }
  container.append(legend);
}

export function showUngroundedBadge(container: HTMLElement, nodeId: string): void {
  const mark = container.querySelector<HTMLElement>(`mark[data-node-id="${nodeId}"]`);
  if (!mark || mark.querySelector(".ungrounded-badge")) {
    return;
  }
  const badge = document.createElement("span");
  badge.className = "ungrounded-badge";
  badge.textContent = "ungrounded";
  badge.title = "no visual evidence was found for this entity";
  mark.append(badge);
}

// -- tooltip: radius-1 graph neighborhood on hover

export class Tooltip {
  private element: HTMLElement | null = null;

  constructor(
    private readonly api: Pick<ApiClient, "neighborhood">,
    private readonly root: HTMLElement,
  ) {}

  async show(answer: AnswerDoc, nodeId: string, anchor: HTMLElement): Promise<void> {
    this.hide();
    const popover = document.createElement("div");
    popover.className = "tooltip";
    popover.dataset.nodeId = nodeId;
    this.element = popover;
    this.root.append(popover);
    let graph: GraphDoc;
    try {
      graph = await this.api.neighborhood(answer.answer_id, nodeId, 1);
    } catch (error) {
      if (this.element === popover) {
        const chip = document.createElement("span");
        chip.className = "error-chip";
        chip.textContent = "could not load neighborhood";
        popover.append(chip);
      }
      return;
    }
    if (this.element !== popover) {
      return; // dismissed while loading
    }
    const labels = new Map(graph.nodes.map((n) => [n.node_id, n.canonical_label]));
    const title = document.createElement("strong");
    title.textContent = labels.get(nodeId) ?? nodeId;
    popover.append(title);
    const relations = document.createElement("ul");
    relations.className = "relations";
    for (const edge of graph.edges) {
      const item = document.createElement("li");
      const other = edge.subject === nodeId ? edge.object : edge.subject;
      const direction = edge.subject === nodeId ? "" : "← ";
      item.textContent = `${direction}${edge.label}: ${labels.get(other) ?? other}`;
      item.dataset.label = edge.label;
      relations.append(item);
    }
    popover.append(relations);
    anchor.setAttribute("aria-describedby", "entity-tooltip");
  }

  hide(): void {
    this.element?.remove();
    this.element = null;
  }

  get visible(): boolean {
    return this.element !== null;
  }
}
