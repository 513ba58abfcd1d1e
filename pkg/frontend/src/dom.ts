import type { Display } from "./controller.js";
import type { Scheduler } from "./player.js";
import type { CandidateDetail, Progress } from "./types.js";

export const domScheduler: Scheduler = (ms, fn) => {
  const handle = window.setInterval(fn, ms);
  return () => window.clearInterval(handle);
};

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

/** Renders the review screen into the static shell in index.html.
 *
 * All 21 frames are kept as preloaded <img> elements and switched by
 * visibility, so the 30 fps loop never waits on the network after the
 * first pass. A frame whose URL fails to load flips to a placeholder
 * tile; the keyboard flow is unaffected.
 */
export class DomDisplay implements Display {
  private strip = byId<HTMLDivElement>("strip");
  private meta = byId<HTMLDivElement>("meta");
  private progress = byId<HTMLDivElement>("progress");
  private indicator = byId<HTMLDivElement>("frame-indicator");
  private scrubBar = byId<HTMLInputElement>("scrub");
  private toast = byId<HTMLDivElement>("toast");
  private complete = byId<HTMLDivElement>("complete");
  private viewer = byId<HTMLElement>("viewer");
  private tiles: HTMLElement[] = [];
  private toastTimer = 0;

  showCandidate(detail: CandidateDetail, pendingLeft: number): void {
    this.complete.hidden = true;
    this.viewer.hidden = false;
    this.strip.replaceChildren();
    this.tiles = detail.frames.map((url, k) => {
      const tile = document.createElement("div");
      tile.className = "tile";
      const img = document.createElement("img");
      img.src = url;
      img.alt = `frame ${k}`;
      img.onerror = () => {
        tile.classList.add("broken");
        tile.title = "frame unavailable";
      };
      tile.appendChild(img);
      this.strip.appendChild(tile);
      return tile;
    });
    this.meta.textContent =
      `${detail.candidate_id} · session ${detail.session_id} · ` +
      `center frame ${detail.center_frame} · strength ${detail.strength.toFixed(1)} · ` +
      `${pendingLeft} pending`;
    this.scrubBar.max = String(detail.frames.length - 1);
    this.scrubBar.value = "0";
  }

  showFrame(index: number, _url: string, isCenter: boolean): void {
    this.tiles.forEach((tile, k) => tile.classList.toggle("active", k === index));
    this.indicator.textContent = isCenter ? `frame ${index} · blink center` : `frame ${index}`;
    this.indicator.classList.toggle("center", isCenter);
    this.scrubBar.value = String(index);
  }

  showProgress(p: Progress): void {
    this.progress.textContent =
      `${p.pending} pending · ${p.accepted} accepted · ${p.rejected} rejected · ${p.total} total`;
  }

  showToast(message: string): void {
    this.toast.textContent = message;
    this.toast.hidden = false;
    window.clearTimeout(this.toastTimer);
    this.toastTimer = window.setTimeout(() => {
      this.toast.hidden = true;
    }, 4000);
  }

  showComplete(p: Progress): void {
    this.viewer.hidden = true;
    this.complete.hidden = false;
    this.complete.textContent =
      `All candidates reviewed: ${p.accepted} accepted, ${p.rejected} rejected ` +
      `of ${p.total}.`;
    this.showProgress(p);
  }
}
