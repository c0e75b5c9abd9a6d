import type {
  ArchetypeListing,
  GenerateRequest,
  GenerateResponse,
} from "./types";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    const text = await response.text();
    throw new ApiError(response.status, `${response.status}: ${text}`);
  }
  return response.json() as Promise<T>;
}

export function fetchClasses(): Promise<{ classes: string[]; vocab_hash: string }> {
  return request("/api/classes");
}

export function fetchArchetypes(className: string): Promise<ArchetypeListing> {
  return request(`/api/archetypes/${encodeURIComponent(className)}`);
}

export function generate(body: GenerateRequest, signal?: AbortSignal): Promise<GenerateResponse> {
  return request("/api/generate", {
    method: "POST",
    body: JSON.stringify(body),
    signal,
  });
}

export function importAppearance(
  imagePngBase64: string,
  box: [number, number, number, number],
  className: string,
): Promise<{ handle: string; vector: number[] }> {
  return request("/api/appearance/import", {
    method: "POST",
    body: JSON.stringify({
      image_png_base64: imagePngBase64,
      box,
      class_name: className,
    }),
  });
}

export function saveSession(id: string, doc: unknown): Promise<{ ok: boolean }> {
  return request(`/api/sessions/${encodeURIComponent(id)}`, {
    method: "PUT",
    body: JSON.stringify(doc),
  });
}

export function loadSession<T>(id: string): Promise<T> {
  return request(`/api/sessions/${encodeURIComponent(id)}`);
}
