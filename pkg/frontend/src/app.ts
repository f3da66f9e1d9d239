/**
 * Console wiring: one WebSocket feed, one store, DOM in, commands out.
 *
 * Every physical value on screen is an echo of Frame/SceneStats messages.
 * Sliders and the yaw compass clamp to the Hello limits and emit one
 * command per gesture; the server enforces its own bounds regardless.
 */

import { clampField, YawCompass } from "./controls.js";
import {
    FieldState,
    fieldCommandSet,
    navPlanSet,
    parseEnvelope,
    pauseMessage,
    resumeMessage,
    WaypointSpec,
} from "./protocol.js";
import { drawFrame, drawMarkers, drawRois, drawTrace } from "./render.js";
import { SessionStore } from "./state.js";
import { Roi } from "./trace.js";

const DEFAULT_URL = "ws://127.0.0.1:8787";

function byId<T extends HTMLElement>(id: string): T {
    const el = document.getElementById(id);
    if (!el) {
        throw new Error(`missing element #${id}`);
    }
    return el as T;
}

class Console {
    store = new SessionStore();
    socket: WebSocket | null = null;
    private frameCanvas = byId<HTMLCanvasElement>("frame");
    private overlayCanvas = byId<HTMLCanvasElement>("overlay");
    private traceCanvas = byId<HTMLCanvasElement>("trace");
    private banner = byId<HTMLDivElement>("banner");
    private pendingWaypoints: WaypointSpec[] = [];
    private roiDragStart: { row: number; col: number } | null = null;
    private placingWaypoints = false;
    private yawCompass: YawCompass;

    constructor(private readonly url: string) {
        this.yawCompass = new YawCompass((yaw) => this.sendField({ yaw_alpha: yaw }));
        this.wireControls();
        this.connect();
        const redraw = () => {
            this.render();
            requestAnimationFrame(redraw);
        };
        requestAnimationFrame(redraw);
    }

    connect(): void {
        this.store.setStatus("connecting");
        this.socket = new WebSocket(this.url);
        this.socket.onopen = () => {
            this.store.setStatus("connected");
            this.updateBanner();
            this.setControlsEnabled(true);
        };
        this.socket.onmessage = (event) => {
            this.store.apply(parseEnvelope(String(event.data)));
            this.updateReadouts();
        };
        this.socket.onclose = () => {
            this.store.setStatus("disconnected");
            this.updateBanner();
            this.setControlsEnabled(false);
        };
    }

    private currentField(): FieldState {
        return (
            this.store.field ?? {
                magnitude_b: 8e-3,
                yaw_alpha: 0,
                pitch_gamma: 0,
                mode: "rotating",
                frequency_f: 6,
                phase0: 0,
            }
        );
    }

    private sendField(update: Partial<FieldState>): void {
        if (!this.socket || this.socket.readyState !== WebSocket.OPEN) {
            return;
        }
        let command = { ...this.currentField(), ...update };
        if (this.store.hello) {
            command = clampField(command, this.store.hello.limits);
        }
        this.socket.send(fieldCommandSet(command));
    }

    private wireControls(): void {
        const compass = byId<HTMLCanvasElement>("compass");
        const center = () => ({ x: compass.width / 2, y: compass.height / 2 });
        compass.addEventListener("pointerdown", (e) => {
            const c = center();
            this.yawCompass.pointerDown(e.offsetX, e.offsetY, c.x, c.y);
        });
        compass.addEventListener("pointermove", (e) => {
            const c = center();
            this.yawCompass.pointerMove(e.offsetX, e.offsetY, c.x, c.y);
        });
        compass.addEventListener("pointerup", () => this.yawCompass.pointerUp());
        compass.addEventListener("pointerleave", () => this.yawCompass.pointerUp());

        for (const [id, apply] of [
            ["pitch", (v: number) => this.sendField({ pitch_gamma: (v * Math.PI) / 180 })],
            ["frequency", (v: number) => this.sendField({ frequency_f: v })],
            ["magnitude", (v: number) => this.sendField({ magnitude_b: v * 1e-3 })],
        ] as const) {
            const slider = byId<HTMLInputElement>(id);
            slider.addEventListener("change", () => apply(Number(slider.value)));
        }

        byId<HTMLButtonElement>("pause").onclick = () =>
            this.socket?.send(pauseMessage());
        byId<HTMLButtonElement>("resume").onclick = () =>
            this.socket?.send(resumeMessage());
        byId<HTMLButtonElement>("reconnect").onclick = () => this.connect();
        byId<HTMLButtonElement>("waypoint-mode").onclick = () => {
            this.placingWaypoints = !this.placingWaypoints;
            this.pendingWaypoints = [];
            byId<HTMLButtonElement>("waypoint-mode").textContent = this.placingWaypoints
                ? "click corners, then send"
                : "place waypoints";
        };
        byId<HTMLButtonElement>("waypoint-send").onclick = () => {
            if (this.pendingWaypoints.length >= 2 && this.socket) {
                this.socket.send(navPlanSet(this.pendingWaypoints, "image", true));
                this.placingWaypoints = false;
                byId<HTMLButtonElement>("waypoint-mode").textContent = "place waypoints";
            }
        };
        byId<HTMLButtonElement>("roi-clear").onclick = () => {
            this.store.rois = [];
        };

        this.overlayCanvas.addEventListener("pointerdown", (e) => {
            const pos = this.framePosition(e);
            if (!pos) {
                return;
            }
            if (this.placingWaypoints) {
                const tank = this.tankPosition(pos);
                if (tank) {
                    this.pendingWaypoints.push({
                        x: tank[0],
                        y: tank[1],
                        tolerance: 5e-5,
                    });
                }
            } else {
                this.roiDragStart = pos;
            }
        });
        this.overlayCanvas.addEventListener("pointerup", (e) => {
            if (!this.roiDragStart) {
                return;
            }
            const end = this.framePosition(e);
            const start = this.roiDragStart;
            this.roiDragStart = null;
            if (!end) {
                return;
            }
            const roi: Roi = {
                row0: Math.min(start.row, end.row),
                col0: Math.min(start.col, end.col),
                row1: Math.max(start.row, end.row) + 1,
                col1: Math.max(start.col, end.col) + 1,
            };
            try {
                this.store.addRoi(roi);
            } catch {
                // degenerate drag: ignore
            }
        });
    }

    private framePosition(e: PointerEvent): { row: number; col: number } | null {
        const shape = this.store.hello?.frame_shape;
        if (!shape) {
            return null;
        }
        const rect = this.overlayCanvas.getBoundingClientRect();
        const col = Math.floor(((e.clientX - rect.left) / rect.width) * shape[1]);
        const row = Math.floor(((e.clientY - rect.top) / rect.height) * shape[0]);
        if (row < 0 || col < 0 || row >= shape[0] || col >= shape[1]) {
            return null;
        }
        return { row, col };
    }

    private tankPosition(pos: { row: number; col: number }): [number, number] | null {
        const hello = this.store.hello;
        if (!hello) {
            return null;
        }
        const { origin, propagation_dir, pixel_pitch } = hello.probe;
        const lateral: [number, number] = [propagation_dir[1], -propagation_dir[0]];
        const depth = (pos.row + 0.5) * pixel_pitch;
        const lat = (pos.col + 0.5 - hello.frame_shape[1] / 2) * pixel_pitch;
        return [
            origin[0] + depth * propagation_dir[0] + lat * lateral[0],
            origin[1] + depth * propagation_dir[1] + lat * lateral[1],
        ];
    }

    private setControlsEnabled(enabled: boolean): void {
        for (const id of ["pitch", "frequency", "magnitude", "pause", "resume"]) {
            byId<HTMLInputElement>(id).toggleAttribute("disabled", !enabled);
        }
    }

    private updateBanner(): void {
        this.banner.textContent =
            this.store.status === "connected"
                ? `connected (${this.store.hello?.server_version ?? "..."})`
                : this.store.status;
        this.banner.className = `banner ${this.store.status}`;
    }

    private updateReadouts(): void {
        const stats = this.store.stats;
        if (!stats) {
            return;
        }
        byId<HTMLSpanElement>("readout-time").textContent = stats.time_s.toFixed(1);
        byId<HTMLSpanElement>("readout-yaw").textContent = (
            (stats.field.yaw_alpha * 180) /
            Math.PI
        ).toFixed(0);
        byId<HTMLSpanElement>("readout-slot").textContent =
            stats.slot_mean_intensity === null
                ? "-"
                : stats.slot_mean_intensity.toFixed(1);
        const nav = stats.nav;
        byId<HTMLSpanElement>("readout-nav").textContent = nav
            ? nav.finished
                ? "finished"
                : `leg ${nav.target_index}`
            : "idle";
        if (this.store.hello) {
            this.updateBanner();
        }
    }

    private render(): void {
        const frame = this.store.latestFrame;
        const shape = this.store.hello?.frame_shape;
        if (frame) {
            drawFrame(this.frameCanvas, frame.pixels, frame.payload);
        }
        if (shape) {
            const ctx = this.overlayCanvas.getContext("2d");
            ctx?.clearRect(0, 0, this.overlayCanvas.width, this.overlayCanvas.height);
            drawRois(
                this.overlayCanvas,
                this.store.rois.map((r) => r.roi),
                shape,
            );
            const markers = this.pendingWaypoints
                .map((w) => this.waypointToFrame(w))
                .filter((m): m is { row: number; col: number } => m !== null);
            drawMarkers(this.overlayCanvas, markers, shape, "#6dff8f");
        }
        const first = this.store.rois[0];
        if (first) {
            drawTrace(this.traceCanvas, first.ring.values(), (t) =>
                this.store.fieldPhaseAt(t),
            );
        }
    }

    private waypointToFrame(w: WaypointSpec): { row: number; col: number } | null {
        const hello = this.store.hello;
        if (!hello) {
            return null;
        }
        const { origin, propagation_dir, pixel_pitch } = hello.probe;
        const lateral: [number, number] = [propagation_dir[1], -propagation_dir[0]];
        const dx = w.x - origin[0];
        const dy = w.y - origin[1];
        const depth = dx * propagation_dir[0] + dy * propagation_dir[1];
        const lat = dx * lateral[0] + dy * lateral[1];
        return {
            row: depth / pixel_pitch - 0.5,
            col: lat / pixel_pitch - 0.5 + hello.frame_shape[1] / 2,
        };
    }
}

const params = new URLSearchParams(window.location.search);
new Console(params.get("ws") ?? DEFAULT_URL);
