/**
 * Job polling: 500 ms interval, exponential backoff after failures
 * (doubling to an 8 s cap, reset on success), cancellable.
 */

import type { JobStatus, StudioApi } from "./api.js";

export const POLL_INTERVAL_MS = 500;
export const BACKOFF_CAP_MS = 8000;

export function nextDelay(currentDelay: number, failed: boolean): number {
  if (!failed) return POLL_INTERVAL_MS;
  return Math.min(Math.max(currentDelay, POLL_INTERVAL_MS) * 2, BACKOFF_CAP_MS);
}

export type PollHandle = {
  promise: Promise<JobStatus>;
  cancel: () => void;
};

type Sleeper = (ms: number) => Promise<void>;

const realSleep: Sleeper = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

export function pollJob(
  api: Pick<StudioApi, "getJob">,
  jobId: string,
  onUpdate?: (status: JobStatus) => void,
  sleep: Sleeper = realSleep,
): PollHandle {
  let cancelled = false;
  const promise = (async (): Promise<JobStatus> => {
    let delay = POLL_INTERVAL_MS;
    for (;;) {
      if (cancelled) throw new Error("polling cancelled");
      let status: JobStatus | null = null;
      try {
        status = await api.getJob(jobId);
        delay = nextDelay(delay, false);
      } catch {
        delay = nextDelay(delay, true);
      }
      if (status !== null) {
        onUpdate?.(status);
        if (status.status === "done" || status.status === "failed") {
          return status;
        }
      }
      await sleep(delay);
    }
  })();
  return {
    promise,
    cancel: () => {
      cancelled = true;
    },
  };
}
