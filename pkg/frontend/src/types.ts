// API document types, mirrored from the server's published JSON schemas.

export interface LegendEntry {
  category: string;
  color: string;
}

export interface AnnotationDoc {
  start: number;
  end: number;
  node_id: string;
  color: string;
  class_id: string;
}

export interface GraphNodeDoc {
  node_id: string;
  class_id: string;
  canonical_label: string;
  spans: [number, number][];
  attributes: Record<string, string>;
  attribute_conflicts?: [string, string][];
  grounding: { kind: "ungrounded" | "dynamic" | "static"; ref: string | null };
}

export interface GraphEdgeDoc {
  subject: string;
  label: string;
  object: string;
}

export interface GraphDoc {
  nodes: GraphNodeDoc[];
  edges: GraphEdgeDoc[];
  dropped_mentions: number;
  dropped_edges: number;
}

export interface TrackSampleDoc {
  frame_index: number;
  bbox: [number, number, number, number]; // cx, cy, w, h in [0,1]
  confidence: number;
}

export interface TrackDoc {
  track_id: string;
  node_id: string;
  class_id: string;
  color: string;
  samples: TrackSampleDoc[];
}

export interface MaskDoc {
  class_id: string;
  node_id: string | null;
  color: string;
  polygons: [number, number][][];
  reference_frame: number;
}

export interface RelatedHitDoc {
  video_id: string;
  clip_index: number;
  start_s: number;
  end_s: number;
  score: number;
  rank: number;
  normalized_score: number;
}

export interface TimelineCellDoc {
  clip_index: number;
  start_s: number;
  end_s: number;
  normalized_score: number;
}

export interface TimelineRowDoc {
  video_id: string;
  cells: TimelineCellDoc[];
}

export interface AnswerDoc {
  answer_id: string;
  session_id: string;
  query: string;
  narrative: string;
  graph: GraphDoc;
  annotations: AnnotationDoc[];
  tracks: TrackDoc[];
  active_masks: MaskDoc[];
  related: RelatedHitDoc[];
  timeline: TimelineRowDoc[];
  confidence_band: "high" | "medium" | "low";
  chosen: { video_id: string; clip_index: number };
  legend: LegendEntry[];
}

export interface OverlayDoc {
  video_id: string;
  clip_index: number;
  window: { start_s: number; end_s: number };
  fps: number;
  boxes: TrackDoc[];
  masks: MaskDoc[];
}

export interface StageEvent {
  stage:
    | "screened"
    | "enriched"
    | "retrieved"
    | "narrated"
    | "extracted"
    | "grounded"
    | "done";
  detail: Record<string, unknown>;
}

export interface ApiErrorDoc {
  code: "refused" | "not-found" | "backend-failure" | "bad-request" | "conflict";
  message: string;
  stage?: string;
}
