/** Thin fetch layer over the /v1 service. Errors come back verbatim. */
export class ApiError extends Error {
    constructor(status, body) {
        super(`${body.code}: ${body.message}`);
        this.status = status;
        this.body = body;
    }
}
async function getJson(path, params) {
    const qs = params ? "?" + new URLSearchParams(params).toString() : "";
    const resp = await fetch(path + qs);
    const body = await resp.json();
    if (!resp.ok)
        throw new ApiError(resp.status, body);
    return body;
}
export function fetchDeployments() {
    return getJson("/v1/deployments");
}
export function fetchChannels(deploymentId) {
    return getJson(`/v1/deployments/${encodeURIComponent(deploymentId)}/channels`);
}
export function fetchSeries(request) {
    return getJson(request.path, request.params);
}
export function fetchFrames(params) {
    return getJson("/v1/spatial/frames", params);
}
export async function uploadFile(file, deployment, user) {
    const form = new FormData();
    form.append("file", file);
    form.append("deployment", deployment);
    form.append("user", user);
    const resp = await fetch("/v1/uploads", { method: "POST", body: form });
    return { status: resp.status, body: await resp.json() };
}
