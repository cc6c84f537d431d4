// Video player with overlay layers. Static masks render beneath dynamic
// boxes at reduced opacity; both stay synchronized with playback time.
// When media is unavailable the SVG stage still renders every overlay.

import type { AnswerDoc, OverlayDoc, TrackDoc } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";

export type EntityAction =
  | { action: "seek"; time: number; nodeId: string }
  | { action: "highlight-mask"; classId: string; nodeId: string }
  | { action: "badge"; nodeId: string };

export class VideoPanel {
  readonly video: HTMLVideoElement;
  readonly stage: SVGSVGElement;
  private overlay: OverlayDoc | null = null;
  private time = 0;
  private trajectories = new Set<string>();
  private mediaAvailable = false;
  readonly seekLog: number[] = [];

  constructor(private readonly container: HTMLElement) {
    this.video = document.createElement("video");
    this.video.controls = true;
    this.stage = document.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.stage.setAttribute("viewBox", "0 0 1 1");
    this.stage.setAttribute("preserveAspectRatio", "none");
    this.stage.classList.add("overlay-stage");
    container.classList.add("video-panel");
    container.append(this.video, this.stage);
    this.video.addEventListener("timeupdate", () => {
      this.time = this.video.currentTime;
      this.renderAt(this.time);
    });
  }

  setMedia(url: string | null): void {
    this.mediaAvailable = url !== null;
    if (url) {
      this.video.src = url;
      this.container.classList.remove("placeholder");
    } else {
      this.video.removeAttribute("src");
      this.container.classList.add("placeholder");
    }
  }

  setOverlay(overlay: OverlayDoc | null): void {
    this.overlay = overlay;
    this.trajectories.clear();
    this.renderAt(this.time);
  }

  get currentOverlay(): OverlayDoc | null {
    return this.overlay;
  }

  seek(time: number): void {
    this.time = time;
    this.seekLog.push(time);
    if (this.mediaAvailable) {
      this.video.currentTime = time;
    }
    this.renderAt(time);
  }

  enableTrajectory(nodeId: string): void {
    this.trajectories.add(nodeId);
    this.renderAt(this.time);
  }

  highlightMask(classId: string): void {
    for (const polygon of this.stage.querySelectorAll("polygon")) {
      polygon.classList.toggle(
        "highlighted",
        polygon.getAttribute("data-class-id") === classId,
      );
    }
  }

  private boxAt(track: TrackDoc, frame: number) {
    const first = track.samples[0].frame_index;
    const last = track.samples[track.samples.length - 1].frame_index;
    if (frame < first || frame > last) {
      return null;
    }
    let current = track.samples[0];
    for (const sample of track.samples) {
      if (sample.frame_index <= frame) {
        current = sample;
      } else {
        break;
      }
    }
    return current;
  }

  renderAt(time: number): void {
    this.time = time;
    this.stage.replaceChildren();
    if (!this.overlay) {
      return;
    }
    const frame = Math.floor(time * this.overlay.fps);

    const maskLayer = document.createElementNS(SVG_NS, "g");
    maskLayer.setAttribute("class", "mask-layer");
    for (const mask of this.overlay.masks) {
      for (const ring of mask.polygons) {
        const polygon = document.createElementNS(SVG_NS, "polygon");
        polygon.setAttribute("points", ring.map(([x, y]) => `${x},${y}`).join(" "));
        polygon.setAttribute("fill", mask.color);
        polygon.setAttribute("fill-opacity", "0.25"); // subtler than dynamic boxes
        polygon.setAttribute("data-class-id", mask.class_id);
        if (mask.node_id) {
          polygon.setAttribute("data-node-id", mask.node_id);
        }
        maskLayer.append(polygon);
      }
    }
    this.stage.append(maskLayer);

    const boxLayer = document.createElementNS(SVG_NS, "g");
    boxLayer.setAttribute("class", "box-layer");
    for (const track of this.overlay.boxes) {
      const sample = this.boxAt(track, frame);
      if (sample) {
        const [cx, cy, w, h] = sample.bbox;
        const rect = document.createElementNS(SVG_NS, "rect");
        rect.setAttribute("x", String(cx - w / 2));
        rect.setAttribute("y", String(cy - h / 2));
        rect.setAttribute("width", String(w));
        rect.setAttribute("height", String(h));
        rect.setAttribute("fill", "none");
        rect.setAttribute("stroke", track.color);
        rect.setAttribute("stroke-width", "0.006");
        rect.setAttribute("data-node-id", track.node_id);
        rect.setAttribute("data-track-id", track.track_id);
        boxLayer.append(rect);
      }
      if (this.trajectories.has(track.node_id)) {
        const line = document.createElementNS(SVG_NS, "polyline");
        line.setAttribute(
          "points",
          track.samples.map((s) => `${s.bbox[0]},${s.bbox[1]}`).join(" "),
        );
        line.setAttribute("fill", "none");
        line.setAttribute("stroke", track.color);
        line.setAttribute("stroke-width", "0.004");
        line.setAttribute("stroke-dasharray", "0.01,0.008");
        line.setAttribute("class", "trajectory");
        line.setAttribute("data-node-id", track.node_id);
        boxLayer.append(line);
      }
    }
    this.stage.append(boxLayer);
  }
}

// Entity-click policy: grounded dynamic entities seek the player to the
// first detected frame and reveal the trajectory; static entities light up
// their mask; ungrounded entities surface a badge instead of pretending.
export function entityClick(
  nodeId: string,
  answer: AnswerDoc,
  overlay: OverlayDoc | null,
  player: VideoPanel,
): EntityAction {
  const node = answer.graph.nodes.find((n) => n.node_id === nodeId);
  if (!node || node.grounding.kind === "ungrounded") {
    return { action: "badge", nodeId };
  }
  if (node.grounding.kind === "static") {
    player.highlightMask(node.class_id);
    return { action: "highlight-mask", classId: node.class_id, nodeId };
  }
  const track =
    overlay?.boxes.find((t) => t.node_id === nodeId) ??
    answer.tracks.find((t) => t.node_id === nodeId);
  if (!track || track.samples.length === 0 || !overlay) {
    return { action: "badge", nodeId };
  }
  const time = track.samples[0].frame_index / overlay.fps;
  player.seek(time);
  player.enableTrajectory(nodeId);
  return { action: "seek", time, nodeId };
}
