/**
 * Canvas drawing: greyscale frames at native resolution, scaled without
 * smoothing so the speckle texture survives, plus ROI / waypoint / path
 * overlays in frame coordinates.
 */

import { FramePayload } from "./protocol.js";
import { Roi, TraceSample } from "./trace.js";

export function drawFrame(
    canvas: HTMLCanvasElement,
    pixels: Uint8Array,
    payload: FramePayload,
): void {
    const { rows, cols } = payload;
    const ctx = canvas.getContext("2d");
    if (!ctx) {
        return;
    }
    const image = ctx.createImageData(cols, rows);
    for (let i = 0; i < pixels.length; i++) {
        const v = pixels[i];
        const j = i * 4;
        image.data[j] = v;
        image.data[j + 1] = v;
        image.data[j + 2] = v;
        image.data[j + 3] = 255;
    }
    const off = new OffscreenCanvas(cols, rows);
    const offCtx = off.getContext("2d")!;
    offCtx.putImageData(image, 0, 0);
    ctx.imageSmoothingEnabled = false; // nearest neighbour keeps speckle
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

export function drawRois(
    canvas: HTMLCanvasElement,
    rois: Roi[],
    frameShape: [number, number],
): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
        return;
    }
    const [rows, cols] = frameShape;
    const sx = canvas.width / cols;
    const sy = canvas.height / rows;
    ctx.lineWidth = 1.5;
    rois.forEach((roi, i) => {
        ctx.strokeStyle = i === 0 ? "#ffd54a" : "#4ad1ff";
        ctx.strokeRect(
            roi.col0 * sx,
            roi.row0 * sy,
            (roi.col1 - roi.col0) * sx,
            (roi.row1 - roi.row0) * sy,
        );
    });
}

export function drawMarkers(
    canvas: HTMLCanvasElement,
    points: { row: number; col: number }[],
    frameShape: [number, number],
    style: string,
): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
        return;
    }
    const [rows, cols] = frameShape;
    const sx = canvas.width / cols;
    const sy = canvas.height / rows;
    ctx.fillStyle = style;
    for (const p of points) {
        ctx.beginPath();
        ctx.arc(p.col * sx, p.row * sy, 4, 0, 2 * Math.PI);
        ctx.fill();
    }
}

export function drawTrace(
    canvas: HTMLCanvasElement,
    samples: TraceSample[],
    phaseAt: (t: number) => number | null,
): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
        return;
    }
    ctx.fillStyle = "#10171e";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (samples.length < 2) {
        return;
    }
    const t0 = samples[0].time_s;
    const t1 = samples[samples.length - 1].time_s;
    const span = Math.max(t1 - t0, 1e-9);
    const toX = (t: number) => ((t - t0) / span) * canvas.width;
    const toY = (v: number) => canvas.height * (1 - v / 255);

    // drive phase underlay: one tick per field revolution
    ctx.strokeStyle = "#2c3b4a";
    for (const s of samples) {
        const phase = phaseAt(s.time_s);
        if (phase !== null && phase < 0.12) {
            ctx.beginPath();
            ctx.moveTo(toX(s.time_s), 0);
            ctx.lineTo(toX(s.time_s), canvas.height);
            ctx.stroke();
        }
    }

    ctx.strokeStyle = "#ffd54a";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    samples.forEach((s, i) => {
        if (i === 0) {
            ctx.moveTo(toX(s.time_s), toY(s.value));
        } else {
            ctx.lineTo(toX(s.time_s), toY(s.value));
        }
    });
    ctx.stroke();
}
