/** Upload-report view-model: per-line error table and outcome banner. */
/** One table row per rejected line; row count equals rows_rejected. */
export function errorTableRows(report) {
    return report.errors.map(e => ({
        line: e.line_number,
        kind: e.kind,
        excerpt: e.excerpt,
    }));
}
export function uploadBanner(status, body) {
    if (status === 201) {
        const ok = body;
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
    const err = body;
    if (status === 409 && err.code === "duplicate_upload") {
        return {
            kind: "duplicate",
            originalUploadId: String(err.detail?.["original_upload_id"] ?? ""),
            message: err.message,
        };
    }
    return { kind: "error", code: err.code, message: err.message };
}
