/**
 * ROI statistics over raw frame bytes and the rolling trace buffer.
 *
 * The mean here must agree exactly with the backend's ROI mean for
 * pixel-aligned rectangles: both sum the same uint8 values into an exact
 * integer (far below 2^53) and divide by the same count, so the IEEE
 * doubles are identical.
 */

export interface Roi {
    row0: number;
    col0: number;
    row1: number;
    col1: number;
}

export function validateRoi(roi: Roi, rows: number, cols: number): void {
    if (
        roi.row0 < 0 ||
        roi.col0 < 0 ||
        roi.row1 > rows ||
        roi.col1 > cols ||
        roi.row1 <= roi.row0 ||
        roi.col1 <= roi.col0
    ) {
        throw new Error("ROI outside frame or empty");
    }
}

export function roiMean(
    pixels: Uint8Array,
    rows: number,
    cols: number,
    roi: Roi,
): number {
    validateRoi(roi, rows, cols);
    let sum = 0;
    for (let r = roi.row0; r < roi.row1; r++) {
        const base = r * cols;
        for (let c = roi.col0; c < roi.col1; c++) {
            sum += pixels[base + c];
        }
    }
    const count = (roi.row1 - roi.row0) * (roi.col1 - roi.col0);
    return sum / count;
}

export interface TraceSample {
    time_s: number;
    value: number;
}

/** Fixed-capacity ring of trace samples (capacity from rate x seconds). */
export class TraceRing {
    private samples: TraceSample[] = [];

    constructor(readonly capacity: number) {
        if (capacity < 1) {
            throw new Error("trace capacity must be positive");
        }
    }

    push(time_s: number, value: number): void {
        this.samples.push({ time_s, value });
        if (this.samples.length > this.capacity) {
            this.samples.shift();
        }
    }

    values(): TraceSample[] {
        return this.samples.slice();
    }

    get length(): number {
        return this.samples.length;
    }

    clear(): void {
        this.samples = [];
    }
}

/** Buffer capacity holding at least `seconds` of samples at `frameRate`. */
export function traceCapacity(frameRate: number, seconds = 10): number {
    if (frameRate <= 0) {
        throw new Error("frame rate must be positive");
    }
    return Math.ceil(frameRate * seconds);
}
