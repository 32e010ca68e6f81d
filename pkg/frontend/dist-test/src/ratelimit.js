// Trailing-edge rate limiter for drag posts (at most one call per interval,
// always delivering the most recent arguments). Clock and scheduler are
// injectable for tests.
export function rateLimit(fn, minIntervalMs, now = () => Date.now(), schedule = (cb, ms) => setTimeout(cb, ms)) {
    let lastFired = -Infinity;
    let pending = null;
    let scheduled = false;
    const fire = (value) => {
        lastFired = now();
        fn(value);
    };
    const onTimer = () => {
        scheduled = false;
        if (pending !== null) {
            const { value } = pending;
            pending = null;
            fire(value);
        }
    };
    const limiter = ((value) => {
        const elapsed = now() - lastFired;
        if (elapsed >= minIntervalMs) {
            fire(value);
            return;
        }
        pending = { value };
        if (!scheduled) {
            scheduled = true;
            schedule(onTimer, minIntervalMs - elapsed);
        }
    });
    limiter.flushPending = onTimer;
    return limiter;
}
