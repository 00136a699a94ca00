/** Thin fetch layer over the /v1 service. Errors come back verbatim. */

import {
  ApiErrorBody,
  ChannelJson,
  DeploymentJson,
  FramesPayload,
  SeriesPayload,
  UploadResponse,
} from "./types.js";
import { ApiRequest } from "./state.js";

export class ApiError extends Error {
  constructor(public status: number, public body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
  }
}

async function getJson<T>(path: string, params?: [string, string][]): Promise<T> {
  const qs = params ? "?" + new URLSearchParams(params).toString() : "";
  const resp = await fetch(path + qs);
  const body = await resp.json();
  if (!resp.ok) throw new ApiError(resp.status, body as ApiErrorBody);
  return body as T;
}

export function fetchDeployments(): Promise<{ deployments: DeploymentJson[] }> {
  return getJson("/v1/deployments");
}

export function fetchChannels(deploymentId: string):
    Promise<{ deployment_id: string; channels: ChannelJson[] }> {
  return getJson(`/v1/deployments/${encodeURIComponent(deploymentId)}/channels`);
}

export function fetchSeries(request: ApiRequest): Promise<SeriesPayload> {
  return getJson(request.path, request.params);
}

export function fetchFrames(params: [string, string][]): Promise<FramesPayload> {
  return getJson("/v1/spatial/frames", params);
}

export async function uploadFile(file: File, deployment: string, user: string):
    Promise<{ status: number; body: UploadResponse | ApiErrorBody }> {
  const form = new FormData();
  form.append("file", file);
  form.append("deployment", deployment);
  form.append("user", user);
  const resp = await fetch("/v1/uploads", { method: "POST", body: form });
  return { status: resp.status, body: await resp.json() };
}
