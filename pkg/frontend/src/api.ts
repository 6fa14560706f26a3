// The panel's entire network surface: GET /api and GET /stats.

import type { ApiResponse } from "./state.js";

export interface Stats {
  experiments: number;
  unique_clients: number;
  since: string | null;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body.error) return body.error;
  } catch {
    // fall through to the generic message
  }
  return `service returned ${response.status}`;
}

export async function measureOnce(
  baseUrl: string,
  levels: { r: number; g: number; b: number },
  fetchFn: typeof fetch = fetch,
): Promise<ApiResponse> {
  const query = new URLSearchParams({
    R: String(levels.r),
    G: String(levels.g),
    B: String(levels.b),
  });
  const response = await fetchFn(`${baseUrl}/api?${query}`);
  if (!response.ok) {
    throw new ServiceError(response.status, await errorMessage(response));
  }
  return (await response.json()) as ApiResponse;
}

export async function fetchStats(
  baseUrl: string,
  fetchFn: typeof fetch = fetch,
): Promise<Stats> {
  const response = await fetchFn(`${baseUrl}/stats`);
  if (!response.ok) {
    throw new ServiceError(response.status, await errorMessage(response));
  }
  return (await response.json()) as Stats;
}
