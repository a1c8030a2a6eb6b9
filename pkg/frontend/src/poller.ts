// Poll-based refresh (the gateway exposes no streaming endpoint in v1).

export interface Poller {
  stop(): void;
  tick(): Promise<void>;
}

export function startPolling(
  refresh: () => Promise<void>,
  intervalMs = 5000,
): Poller {
  let stopped = false;
  let timer: ReturnType<typeof setTimeout> | null = null;

  const loop = async () => {
    if (stopped) return;
    try {
      await refresh();
    } catch (error) {
      console.warn('poll failed', error);
    }
    if (!stopped) timer = setTimeout(loop, intervalMs);
  };
  void loop();

  return {
    stop() {
      stopped = true;
      if (timer) clearTimeout(timer);
    },
    tick: refresh,
  };
}
