// Related-clips timeline: one row per video, one cell per retrieved clip.
// Horizontal position encodes the clip start within its source video; cell
// intensity encodes the server-normalized similarity score.

import type { AnswerDoc } from "./types";

export interface TimelineHandlers {
  onSeek?: (startS: number) => void;
  onSwitch?: (videoId: string, clipIndex: number) => void;
}

export function renderTimeline(
  container: HTMLElement,
  answer: AnswerDoc,
  activeClip: { video_id: string; clip_index: number },
  handlers: TimelineHandlers = {},
): void {
  container.replaceChildren();
  container.classList.add("timeline");

  const maxEnd = Math.max(
    ...answer.timeline.flatMap((row) => row.cells.map((cell) => cell.end_s)),
  );

  for (const row of answer.timeline) {
    const rowElement = document.createElement("div");
    rowElement.className = "timeline-row";
    rowElement.dataset.videoId = row.video_id;
    if (row.video_id === activeClip.video_id) {
      rowElement.classList.add("active-row");
    }

    const label = document.createElement("span");
    label.className = "row-label";
    label.textContent = row.video_id;
    rowElement.append(label);

    const lane = document.createElement("div");
    lane.className = "lane";
    for (const cell of row.cells) {
      const cellElement = document.createElement("button");
      cellElement.type = "button";
      cellElement.className = "cell";
      cellElement.dataset.videoId = row.video_id;
      cellElement.dataset.clipIndex = String(cell.clip_index);
      cellElement.dataset.startS = String(cell.start_s);
      cellElement.dataset.normalizedScore = String(cell.normalized_score);
      cellElement.style.left = `${(cell.start_s / maxEnd) * 100}%`;
      cellElement.style.width = `${((cell.end_s - cell.start_s) / maxEnd) * 100}%`;
      // intensity from the normalized score, never recomputed client-side
      cellElement.style.opacity = String(0.25 + 0.75 * cell.normalized_score);
      if (
        row.video_id === activeClip.video_id &&
        cell.clip_index === activeClip.clip_index
      ) {
        cellElement.classList.add("current");
      }
      cellElement.title = `${row.video_id}:${cell.clip_index} @ ${cell.start_s}s`;
      cellElement.addEventListener("click", () => {
        if (row.video_id === activeClip.video_id) {
          handlers.onSeek?.(cell.start_s);
        } else {
          handlers.onSwitch?.(row.video_id, cell.clip_index);
        }
      });
      lane.append(cellElement);
    }
    rowElement.append(lane);
    container.append(rowElement);
  }
}
