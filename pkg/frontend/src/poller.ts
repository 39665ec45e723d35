export interface Poller {
  stop(): void;
}

/**
 * Run `tick` every `intervalMs`, skipping a beat while the previous tick is
 * still in flight so a slow server never stacks requests. Rejections are
 * swallowed here; the tick itself is responsible for flagging stale state.
 */
export function startPoller(tick: () => Promise<void>, intervalMs = 1500): Poller {
  let inFlight = false;
  const timer = setInterval(() => {
    if (inFlight) return;
    inFlight = true;
    tick()
      .catch(() => {})
      .finally(() => {
        inFlight = false;
      });
  }, intervalMs);
  return { stop: () => clearInterval(timer) };
}
