/**
 * Wire protocol v1 types and helpers (see docs/wire-protocol-v1.md).
 *
 * The console never invents scene state: everything rendered comes out of
 * these messages, and everything sent is a command envelope built here.
 */

export interface Envelope {
    type: string;
    session?: string;
    seq?: number;
    payload: unknown;
}

export interface ServiceLimits {
    max_field_t: number;
    max_pitch_rad: number;
}

export interface HelloPayload {
    schema_version: string;
    server_version: string;
    limits: ServiceLimits;
    probe: {
        frame_rate: number;
        pixel_pitch: number;
        origin: [number, number];
        propagation_dir: [number, number];
        imaging_depth: number;
        lateral_width: number;
        gain: number;
    };
    frame_shape: [number, number];
    paused: boolean;
    time_s: number;
}

export interface FramePayload {
    frame_index: number;
    timestamp_s: number;
    rows: number;
    cols: number;
    pixel_pitch_m: number;
    encoding: string;
    data: string;
}

export interface FieldState {
    magnitude_b: number;
    yaw_alpha: number;
    pitch_gamma: number;
    mode: string;
    frequency_f: number;
    phase0: number;
}

export interface NavStats {
    target_index: number;
    finished: boolean;
    lost_frames: number;
    arrivals: { index: number; time_s: number }[];
}

export interface SceneStatsPayload {
    time_s: number;
    frame_index: number;
    centroid_m: [number, number];
    field: FieldState;
    slot_mean_intensity: number | null;
    total_particles: number;
    swarm_region: {
        x0: number;
        y0: number;
        x1: number;
        y1: number;
        mean_density: number;
    } | null;
    nav: NavStats | null;
}

export interface ErrorPayload {
    code: string;
    detail: string;
}

export function parseEnvelope(raw: string): Envelope {
    const value = JSON.parse(raw);
    if (typeof value !== "object" || value === null || typeof value.type !== "string") {
        throw new Error("not a protocol envelope");
    }
    return value as Envelope;
}

/** Decode the base64 row-major uint8 frame payload. */
export function decodeFramePixels(payload: FramePayload): Uint8Array {
    if (payload.encoding !== "base64/u8-row-major") {
        throw new Error(`unsupported frame encoding ${payload.encoding}`);
    }
    const binary =
        typeof atob === "function"
            ? atob(payload.data)
            : Buffer.from(payload.data, "base64").toString("binary");
    const pixels = new Uint8Array(binary.length);
    for (let i = 0; i < binary.length; i++) {
        pixels[i] = binary.charCodeAt(i) & 0xff;
    }
    if (pixels.length !== payload.rows * payload.cols) {
        throw new Error("frame payload size mismatch");
    }
    return pixels;
}

export function fieldCommandSet(field: FieldState): string {
    return JSON.stringify({ type: "FieldCommandSet", payload: field });
}

export interface WaypointSpec {
    x: number;
    y: number;
    tolerance: number;
}

export function navPlanSet(
    waypoints: WaypointSpec[],
    source: "ground_truth" | "image" = "image",
    closeLoop = true,
): string {
    return JSON.stringify({
        type: "NavPlanSet",
        payload: { waypoints, source, close_loop: closeLoop },
    });
}

export function pauseMessage(): string {
    return JSON.stringify({ type: "Pause", payload: {} });
}

export function resumeMessage(): string {
    return JSON.stringify({ type: "Resume", payload: {} });
}
