// Wires the three coordinated components to the API: chat panel, video
// player with overlays, related-clips timeline.

import { ApiClient, ApiError } from "./api";
import { renderChat, showUngroundedBadge, Tooltip } from "./chat";
import { entityClick, VideoPanel } from "./player";
import { Store } from "./state";
import { renderTimeline } from "./timeline";
import type { StageEvent } from "./types";

export interface AppElements {
  chat: HTMLElement;
  player: HTMLElement;
  timeline: HTMLElement;
  form: HTMLFormElement;
  input: HTMLInputElement;
  status: HTMLElement;
}

export class App {
  readonly store = new Store();
  readonly panel: VideoPanel;
  readonly tooltip: Tooltip;
  private socket: WebSocket | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly elements: AppElements,
  ) {
    this.panel = new VideoPanel(elements.player);
    this.tooltip = new Tooltip(api, elements.chat);
    elements.form.addEventListener("submit", (event) => {
      event.preventDefault();
      const question = elements.input.value.trim();
      if (question) {
        void this.ask(question);
      }
    });
  }

  async start(): Promise<void> {
    const sessionId = await this.api.createSession();
    this.store.update({ sessionId });
    try {
      this.socket = this.api.events(sessionId, (event) => this.onStage(event));
    } catch {
      this.socket = null; // progress events are cosmetic
    }
  }

  private onStage(event: StageEvent): void {
    this.elements.status.textContent =
      event.stage === "done" ? "" : `… ${event.stage}`;
  }

  async ask(question: string): Promise<void> {
    const { sessionId } = this.store.get();
    if (!sessionId) {
      return;
    }
    this.elements.status.textContent = "… asking";
    try {
      const answer = await this.api.query(sessionId, question);
      this.store.applyAnswer(answer);
      await this.showClip(answer.chosen.video_id, answer.chosen.clip_index);
      this.renderAll();
    } catch (error) {
      this.elements.status.textContent =
        error instanceof ApiError ? `${error.code}: ${error.message}` : "request failed";
      return;
    }
    this.elements.status.textContent = "";
  }

  async showClip(videoId: string, clipIndex: number): Promise<void> {
    const { answer } = this.store.get();
    if (!answer) {
      return;
    }
    let overlay = null;
    try {
      overlay = await this.api.overlays(videoId, clipIndex, answer.answer_id);
    } catch {
      overlay = null;
    }
    this.store.update({
      overlay,
      activeClip: { video_id: videoId, clip_index: clipIndex },
    });
    this.panel.setMedia(null); // media probing is lazy; placeholder until it loads
    const probe = this.api.mediaUrl(videoId);
    try {
      const head = await fetch(probe, { method: "HEAD" });
      this.panel.setMedia(head.ok ? probe : null);
    } catch {
      this.panel.setMedia(null);
    }
    this.panel.setOverlay(overlay);
    if (overlay) {
      this.panel.seek(overlay.window.start_s);
    }
  }

  renderAll(): void {
    const state = this.store.get();
    if (!state.answer || !state.activeClip) {
      return;
    }
    const answer = state.answer;
    renderChat(this.elements.chat, answer, {
      onEntityClick: (nodeId) => {
        const result = entityClick(nodeId, answer, this.store.get().overlay, this.panel);
        if (result.action === "badge") {
          showUngroundedBadge(this.elements.chat, nodeId);
        }
        this.store.update({ selectedNode: nodeId });
      },
      onEntityHover: (nodeId, element) => {
        this.store.update({ hoveredNode: nodeId });
        void this.tooltip.show(answer, nodeId, element);
      },
      onEntityLeave: () => {
        this.store.update({ hoveredNode: null });
        this.tooltip.hide();
      },
      onRelatedClick: (videoId, clipIndex) => {
        void this.switchClip(videoId, clipIndex);
      },
    });
    renderTimeline(this.elements.timeline, answer, state.activeClip, {
      onSeek: (startS) => this.panel.seek(startS),
      onSwitch: (videoId, clipIndex) => {
        void this.switchClip(videoId, clipIndex);
      },
    });
  }

  async switchClip(videoId: string, clipIndex: number): Promise<void> {
    await this.showClip(videoId, clipIndex);
    this.store.update({ timelineSelection: { video_id: videoId, clip_index: clipIndex } });
    this.renderAll();
  }
}
