/**
 * ROI means must equal the backend's values bit for bit: the fixture holds
 * a backend-rendered frame and the backend-computed means for several
 * pixel-aligned ROIs.
 */

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { decodeFramePixels } from "../src/protocol.js";
import { roiMean, traceCapacity, TraceRing } from "../src/trace.js";

interface Fixture {
    rows: number;
    cols: number;
    data: string;
    rois: {
        row0: number;
        col0: number;
        row1: number;
        col1: number;
        expected_mean: number;
    }[];
}

const fixture: Fixture = JSON.parse(
    readFileSync(fileURLToPath(new URL("./fixtures/roi_means.json", import.meta.url)), "utf-8"),
);

function fixturePixels(): Uint8Array {
    return decodeFramePixels({
        frame_index: 0,
        timestamp_s: 0,
        rows: fixture.rows,
        cols: fixture.cols,
        pixel_pitch_m: 1.5e-4,
        encoding: "base64/u8-row-major",
        data: fixture.data,
    });
}

describe("roiMean", () => {
    it("matches the backend exactly on every fixture ROI", () => {
        const pixels = fixturePixels();
        for (const roi of fixture.rois) {
            const mean = roiMean(pixels, fixture.rows, fixture.cols, roi);
            expect(mean).toBe(roi.expected_mean);
        }
    });

    it("rejects out-of-frame and empty ROIs", () => {
        const pixels = fixturePixels();
        expect(() =>
            roiMean(pixels, fixture.rows, fixture.cols, {
                row0: 0,
                col0: 0,
                row1: fixture.rows + 1,
                col1: 4,
            }),
        ).toThrow();
        expect(() =>
            roiMean(pixels, fixture.rows, fixture.cols, {
                row0: 5,
                col0: 5,
                row1: 5,
                col1: 9,
            }),
        ).toThrow();
    });
});

describe("TraceRing", () => {
    it("holds at least ten seconds of samples at the frame rate", () => {
        const capacity = traceCapacity(22, 10);
        expect(capacity).toBe(220);
        const ring = new TraceRing(capacity);
        for (let k = 0; k < 500; k++) {
            ring.push(k / 22, k);
        }
        expect(ring.length).toBe(220);
        const samples = ring.values();
        expect(samples[0].value).toBe(500 - 220);
        expect(samples[samples.length - 1].value).toBe(499);
        const span = samples[samples.length - 1].time_s - samples[0].time_s;
        expect(span).toBeGreaterThanOrEqual(10 - 1 / 22 - 1e-9);
    });

    it("rejects nonsense capacities", () => {
        expect(() => new TraceRing(0)).toThrow();
        expect(() => traceCapacity(0)).toThrow();
    });
});
