// Thin typed client over the triage service HTTP API.

import { ApiError, MetricsDto, ModelDto, QueueDto, QueueItemDto } from './types';

export class ServiceError extends Error {
  constructor(
    public status: number,
    public payload: ApiError,
  ) {
    super(`${payload.code}: ${payload.message}`);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(`${base}${path}`, init);
  const body = await resp.json();
  if (!resp.ok) {
    throw new ServiceError(resp.status, body as ApiError);
  }
  return body as T;
}

export class TriageApi {
  constructor(private base: string = '') {}

  getQueue(limit?: number): Promise<QueueDto> {
    const suffix = limit ? `?limit=${limit}` : '';
    return request<QueueDto>(this.base, `/v1/queue${suffix}`);
  }

  getItem(itemId: string): Promise<QueueItemDto> {
    return request<QueueItemDto>(this.base, `/v1/items/${itemId}`);
  }

  getMetrics(): Promise<MetricsDto> {
    return request<MetricsDto>(this.base, '/v1/metrics');
  }

  getModel(): Promise<ModelDto | null> {
    return request<ModelDto>(this.base, '/v1/model').catch((err) => {
      if (err instanceof ServiceError && err.status === 404) return null;
      throw err;
    });
  }

  decide(
    itemId: string,
    action: 'accept' | 'annotate',
    labelBase64?: string,
    decidedBy?: string,
  ): Promise<QueueItemDto> {
    return request<QueueItemDto>(this.base, `/v1/items/${itemId}/decision`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        action,
        label_base64: labelBase64,
        decided_by: decidedBy,
      }),
    });
  }

  fitModel(alpha = 0.05): Promise<ModelDto> {
    return request<ModelDto>(this.base, '/v1/model/fit', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ alpha }),
    });
  }

  ingestBundle(bytes: Uint8Array | ArrayBuffer): Promise<QueueItemDto> {
    return request<QueueItemDto>(this.base, '/v1/bundles', {
      method: 'POST',
      headers: { 'content-type': 'application/octet-stream' },
      body: bytes as BodyInit,
    });
  }

  overlayUrl(itemId: string, kind: 'entropy' | 'segmentation'): string {
    return `${this.base}/v1/items/${itemId}/overlay.png?kind=${kind}`;
  }

  sourceUrl(itemId: string): string {
    return `${this.base}/v1/items/${itemId}/source.png`;
  }
}
