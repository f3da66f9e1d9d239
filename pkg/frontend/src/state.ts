/**
 * Single session store: the socket feed is the only writer of scene state.
 *
 * Control widgets send commands and wait for the echo in SceneStats; they
 * never poke values into this store directly. Disconnecting only flips
 * the status flag, so ROI traces survive a reconnect.
 */

import {
    Envelope,
    ErrorPayload,
    FieldState,
    FramePayload,
    HelloPayload,
    SceneStatsPayload,
    decodeFramePixels,
} from "./protocol.js";
import { Roi, TraceRing, roiMean, traceCapacity, validateRoi } from "./trace.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface DecodedFrame {
    payload: FramePayload;
    pixels: Uint8Array;
}

export interface RoiTrace {
    roi: Roi;
    ring: TraceRing;
    label: string;
}

const TRACE_SECONDS = 10;
const FALLBACK_FRAME_RATE = 22;

export class SessionStore {
    status: ConnectionStatus = "connecting";
    hello: HelloPayload | null = null;
    latestFrame: DecodedFrame | null = null;
    stats: SceneStatsPayload | null = null;
    field: FieldState | null = null;
    errors: ErrorPayload[] = [];
    rois: RoiTrace[] = [];
    centroidTrack: [number, number][] = [];

    setStatus(status: ConnectionStatus): void {
        this.status = status;
        // buffered traces and the last frame survive a disconnect
    }

    frameRate(): number {
        return this.hello?.probe.frame_rate ?? FALLBACK_FRAME_RATE;
    }

    addRoi(roi: Roi, label = ""): RoiTrace {
        const shape = this.hello?.frame_shape;
        if (shape) {
            validateRoi(roi, shape[0], shape[1]);
        }
        const entry: RoiTrace = {
            roi,
            ring: new TraceRing(traceCapacity(this.frameRate(), TRACE_SECONDS)),
            label: label || `roi-${this.rois.length + 1}`,
        };
        this.rois.push(entry);
        return entry;
    }

    removeRoi(index: number): void {
        this.rois.splice(index, 1);
    }

    apply(envelope: Envelope): void {
        switch (envelope.type) {
            case "Hello":
                this.hello = envelope.payload as HelloPayload;
                break;
            case "Frame": {
                const payload = envelope.payload as FramePayload;
                const pixels = decodeFramePixels(payload);
                this.latestFrame = { payload, pixels };
                for (const entry of this.rois) {
                    entry.ring.push(
                        payload.timestamp_s,
                        roiMean(pixels, payload.rows, payload.cols, entry.roi),
                    );
                }
                break;
            }
            case "SceneStats": {
                const payload = envelope.payload as SceneStatsPayload;
                this.stats = payload;
                this.field = payload.field;
                this.centroidTrack.push(payload.centroid_m);
                if (this.centroidTrack.length > 600) {
                    this.centroidTrack.shift();
                }
                break;
            }
            case "Error":
                this.errors.push(envelope.payload as ErrorPayload);
                break;
            default:
                // ignore unknown message types; never a reason to drop the link
                break;
        }
    }

    /** Instantaneous drive phase for overlaying on the trace panel. */
    fieldPhaseAt(time_s: number): number | null {
        if (!this.field || this.field.mode !== "rotating") {
            return null;
        }
        const turns = this.field.phase0 + 2 * Math.PI * this.field.frequency_f * time_s;
        return ((turns % (2 * Math.PI)) + 2 * Math.PI) % (2 * Math.PI);
    }
}
