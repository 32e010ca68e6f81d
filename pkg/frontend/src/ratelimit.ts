// Trailing-edge rate limiter for drag posts (at most one call per interval,
// always delivering the most recent arguments). Clock and scheduler are
// injectable for tests.

export interface RateLimiter<T> {
  (value: T): void;
  flushPending(): void;
}

export function rateLimit<T>(
  fn: (value: T) => void,
  minIntervalMs: number,
  now: () => number = () => Date.now(),
  schedule: (cb: () => void, ms: number) => unknown = (cb, ms) => setTimeout(cb, ms),
): RateLimiter<T> {
  let lastFired = -Infinity;
  let pending: { value: T } | null = null;
  let scheduled = false;

  const fire = (value: T) => {
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

  const limiter = ((value: T) => {
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
  }) as RateLimiter<T>;

  limiter.flushPending = onTimer;
  return limiter;
}
