// Shared view state for the three coordinated components. The active clip
// mirrors the server-side session after every answer.

import type { AnswerDoc, OverlayDoc } from "./types";

export interface ViewState {
  sessionId: string | null;
  answer: AnswerDoc | null;
  activeClip: { video_id: string; clip_index: number } | null;
  overlay: OverlayDoc | null;
  playbackTime: number;
  hoveredNode: string | null;
  selectedNode: string | null;
  timelineSelection: { video_id: string; clip_index: number } | null;
}

type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState = {
    sessionId: null,
    answer: null,
    activeClip: null,
    overlay: null,
    playbackTime: 0,
    hoveredNode: null,
    selectedNode: null,
    timelineSelection: null,
  };
  private listeners: Listener[] = [];

  get(): ViewState {
    return this.state;
  }

  update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  applyAnswer(answer: AnswerDoc): void {
    this.update({
      answer,
      activeClip: answer.chosen,
      overlay: null,
      hoveredNode: null,
      selectedNode: null,
      timelineSelection: null,
    });
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}
