/**
 * Command-side widgets: gesture debouncing and client-side bounds.
 *
 * A drag gesture emits exactly one command on release, never per pixel of
 * movement. Bounds come from the service Hello and are clamped here for
 * responsiveness; the server stays authoritative.
 */

import { FieldState, ServiceLimits } from "./protocol.js";

/** Collapses a pointer drag into a single emission at release. */
export class GestureEmitter<T> {
    private active = false;
    private lastValue: T | null = null;
    emitted = 0;

    constructor(private readonly emit: (value: T) => void) {}

    begin(value: T): void {
        this.active = true;
        this.lastValue = value;
    }

    move(value: T): void {
        if (this.active) {
            this.lastValue = value;
        }
    }

    end(): void {
        if (!this.active) {
            return;
        }
        this.active = false;
        if (this.lastValue !== null) {
            this.emitted += 1;
            this.emit(this.lastValue);
        }
        this.lastValue = null;
    }

    cancel(): void {
        this.active = false;
        this.lastValue = null;
    }
}

/** Compass drag: pointer angles in, one yaw command out per gesture. */
export class YawCompass {
    readonly gesture: GestureEmitter<number>;

    constructor(emitYaw: (yaw: number) => void) {
        this.gesture = new GestureEmitter(emitYaw);
    }

    pointerDown(x: number, y: number, cx: number, cy: number): void {
        this.gesture.begin(Math.atan2(y - cy, x - cx));
    }

    pointerMove(x: number, y: number, cx: number, cy: number): void {
        this.gesture.move(Math.atan2(y - cy, x - cx));
    }

    pointerUp(): void {
        this.gesture.end();
    }
}

export function clampField(field: FieldState, limits: ServiceLimits): FieldState {
    return {
        ...field,
        magnitude_b: Math.min(Math.max(field.magnitude_b, 0), limits.max_field_t),
        pitch_gamma: Math.min(Math.max(field.pitch_gamma, 0), limits.max_pitch_rad),
        frequency_f: Math.max(field.frequency_f, 0),
    };
}
