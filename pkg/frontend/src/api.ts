// Thin client over the service API. The UI keeps zero analytic logic;
// every threshold and normalization arrives precomputed in these documents.

import type { AnswerDoc, ApiErrorDoc, GraphDoc, OverlayDoc, StageEvent } from "./types";

export class ApiError extends Error {
  readonly code: ApiErrorDoc["code"];
  readonly stage?: string;

  constructor(doc: ApiErrorDoc) {
    super(doc.message);
    this.code = doc.code;
    this.stage = doc.stage;
  }
}

async function asJson<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ApiError(body as ApiErrorDoc);
  }
  return body as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  async createSession(): Promise<string> {
    const response = await fetch(`${this.base}/api/sessions`, { method: "POST" });
    const doc = await asJson<{ session_id: string }>(response);
    return doc.session_id;
  }

  async query(sessionId: string, question: string, k?: number): Promise<AnswerDoc> {
    const response = await fetch(`${this.base}/api/sessions/${sessionId}/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(k === undefined ? { question } : { question, k }),
    });
    return asJson<AnswerDoc>(response);
  }

  async neighborhood(answerId: string, nodeId: string, radius = 1): Promise<GraphDoc> {
    const response = await fetch(
      `${this.base}/api/answers/${answerId}/graph/${nodeId}/neighborhood?radius=${radius}`,
    );
    return asJson<GraphDoc>(response);
  }

  async overlays(videoId: string, clipIndex: number, answerId: string): Promise<OverlayDoc> {
    const response = await fetch(
      `${this.base}/api/clips/${videoId}/${clipIndex}/overlays?answer=${encodeURIComponent(answerId)}`,
    );
    return asJson<OverlayDoc>(response);
  }

  mediaUrl(videoId: string): string {
    return `${this.base}/api/videos/${videoId}/media`;
  }

  events(sessionId: string, onEvent: (event: StageEvent) => void): WebSocket {
    const protocol = location.protocol === "https:" ? "wss" : "ws";
    const socket = new WebSocket(
      `${protocol}://${location.host}${this.base}/api/sessions/${sessionId}/events`,
    );
    socket.onmessage = (message) => onEvent(JSON.parse(message.data) as StageEvent);
    return socket;
  }
}
