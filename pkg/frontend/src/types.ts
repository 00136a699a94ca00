/** Payload shapes of the /v1 service. The client renders these verbatim. */

export interface SeriesPointJson {
  ts: string;
  value: number | null;
  count: number;
}

export interface SeriesPayload {
  channels: Record<string, SeriesPointJson[]>;
  method?: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: Record<string, unknown>;
}

export interface ParseErrorJson {
  line_number: number;
  kind: string;
  excerpt: string;
}

export interface ParseReportJson {
  dialect: string;
  version: number;
  rows_ok: number;
  rows_rejected: number;
  errors: ParseErrorJson[];
  channel_map: Record<string, string[]>;
  unmapped_columns: string[];
  warnings: string[];
}

export interface UploadResponse {
  upload_id: string;
  written: number;
  duplicates: number;
  report: ParseReportJson;
}

export interface GridJson {
  nx: number;
  ny: number;
  origin_x: number;
  origin_y: number;
  cell_size: number;
}

export interface FrameJson {
  ts: string;
  values: (number | null)[][];
  reliability: number[][];
}

export interface FramesPayload {
  deployment: string;
  variable: string;
  grid: GridJson | null;
  vmin: number | null;
  vmax: number | null;
  frames: FrameJson[];
}

export interface DeploymentJson {
  deployment_id: string;
  site_id: string;
  site_name: string;
  kind: string;
  cadence_s: number;
  nodes: number;
  latitude: number;
  longitude: number;
  utc_offset_standard: number;
}

export interface ChannelJson {
  channel_id: string;
  variable: string;
  orientation: string;
  node_id: string;
}
