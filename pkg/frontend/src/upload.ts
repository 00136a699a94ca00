/** Upload-report view-model: per-line error table and outcome banner. */

import { ApiErrorBody, ParseReportJson, UploadResponse } from "./types.js";

export interface ErrorTableRow {
  line: number;
  kind: string;
  excerpt: string;
}

/** One table row per rejected line; row count equals rows_rejected. */
export function errorTableRows(report: ParseReportJson): ErrorTableRow[] {
  return report.errors.map(e => ({
    line: e.line_number,
    kind: e.kind,
    excerpt: e.excerpt,
  }));
}

export type UploadBanner =
  | { kind: "success"; uploadId: string; rowsOk: number; rowsRejected: number;
      written: number; duplicates: number; warnings: string[] }
  | { kind: "duplicate"; originalUploadId: string; message: string }
  | { kind: "error"; code: string; message: string };

export function uploadBanner(status: number,
                             body: UploadResponse | ApiErrorBody): UploadBanner {
  if (status === 201) {
    const ok = body as UploadResponse;
    return {
      kind: "success",
      uploadId: ok.upload_id,
      rowsOk: ok.report.rows_ok,
      rowsRejected: ok.report.rows_rejected,
      written: ok.written,
      duplicates: ok.duplicates,
      warnings: ok.report.warnings,
    };
  }
  const err = body as ApiErrorBody;
  if (status === 409 && err.code === "duplicate_upload") {
    return {
      kind: "duplicate",
      originalUploadId: String(err.detail?.["original_upload_id"] ?? ""),
      message: err.message,
    };
  }
  return { kind: "error", code: err.code, message: err.message };
}
