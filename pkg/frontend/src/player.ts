export const FRAME_COUNT = 21;
export const FPS = 30;
export const FRAME_MS = 1000 / FPS;

/** Repeatedly invoke fn every ms until the returned cancel is called. */
export type Scheduler = (ms: number, fn: () => void) => () => void;

/** Looping playback position over a fixed-length frame strip.
 *
 * Owns only the frame index and the play/pause state; every index change
 * is pushed through onFrame so the display layer stays a pure function of
 * the player. A full loop lasts FRAME_COUNT / FPS = 0.7 s.
 */
export class StripPlayer {
  private index = 0;
  private playing = false;
  private cancel: (() => void) | null = null;

  constructor(
    private schedule: Scheduler,
    private onFrame: (index: number) => void,
    readonly frameCount = FRAME_COUNT,
  ) {}

  get frame(): number {
    return this.index;
  }

  get isPlaying(): boolean {
    return this.playing;
  }

  play(): void {
    if (this.playing) return;
    this.playing = true;
    this.cancel = this.schedule(FRAME_MS, () => this.tick());
  }

  pause(): void {
    if (this.cancel) this.cancel();
    this.cancel = null;
    this.playing = false;
  }

  toggle(): void {
    if (this.playing) this.pause();
    else this.play();
  }

  /** Jump to frame k (wrapping) without touching the play state. */
  seek(k: number): void {
    const n = this.frameCount;
    this.index = ((k % n) + n) % n;
    this.onFrame(this.index);
  }

  /** Manual single-frame step; always pauses first so the loop does not
   *  fight the reviewer's scrubbing. */
  step(delta: number): void {
    this.pause();
    this.seek(this.index + delta);
  }

  /** Rewind for a new candidate, keeping the play/pause state. */
  reset(): void {
    this.seek(0);
  }

  private tick(): void {
    this.seek(this.index + 1);
  }
}
