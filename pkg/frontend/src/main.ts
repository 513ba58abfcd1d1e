import { ReviewApi } from "./api.js";
import { ReviewController } from "./controller.js";
import { DomDisplay, domScheduler } from "./dom.js";

const HANDLED_KEYS = new Set(["a", "A", "r", "R", "u", "U", "ArrowLeft", "ArrowRight", " "]);

function reviewerName(): string {
  const stored = window.sessionStorage.getItem("reviewer");
  if (stored) return stored;
  const name = window.prompt("Reviewer name", "") || "anonymous";
  window.sessionStorage.setItem("reviewer", name);
  return name;
}

const display = new DomDisplay();
const controller = new ReviewController(new ReviewApi(), display, domScheduler, reviewerName());

window.addEventListener("keydown", (event) => {
  if (event.metaKey || event.ctrlKey || event.altKey) return;
  if (!HANDLED_KEYS.has(event.key)) return;
  event.preventDefault();
  void controller.handleKey(event.key);
});

const scrub = document.getElementById("scrub") as HTMLInputElement;
scrub.addEventListener("input", () => controller.scrub(Number(scrub.value)));

controller.start().catch((err) => {
  display.showToast(err instanceof Error ? err.message : String(err));
});
