// Interactive layout editor: place objects on the schematic panel, watch the
// inferred scene graph update, and see live renders from the generation API.

import {
  fetchArchetypes,
  fetchClasses,
  generate,
  importAppearance,
  loadSession,
  saveSession,
} from "./api";
import { debounce, LatestWins } from "./debounce";
import { PanelState } from "./state";
import type { GenerateResponse, Relation } from "./types";

const DEBOUNCE_MS = 300;

// size level 1..10 maps to the ten font sizes of the panel metaphor
function fontSize(level: number): number {
  return 9 + level * 2.2;
}

class App {
  state = new PanelState();
  selected: number | null = null;
  classes: string[] = [];
  archetypeCounts = new Map<string, number>();
  inflight = new LatestWins<GenerateResponse>();
  regen = debounce(() => this.generateNow(), DEBOUNCE_MS);

  panel = document.getElementById("panel") as HTMLDivElement;
  output = document.getElementById("output") as HTMLImageElement;
  graphPane = document.getElementById("graph") as HTMLPreElement;
  classPicker = document.getElementById("class-picker") as HTMLSelectElement;
  slider = document.getElementById("appearance-slider") as HTMLInputElement;
  sizeSlider = document.getElementById("size-slider") as HTMLInputElement;
  status = document.getElementById("status") as HTMLSpanElement;
  sessionBox = document.getElementById("session-id") as HTMLInputElement;

  async start(): Promise<void> {
    const listing = await fetchClasses();
    this.classes = listing.classes;
    for (const name of this.classes) {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      this.classPicker.appendChild(option);
    }
    await Promise.all(
      this.classes.map(async (name) => {
        const archetypes = await fetchArchetypes(name);
        this.archetypeCounts.set(name, archetypes.count);
      }),
    );
    this.wireEvents();
    this.renderPanel();
  }

  wireEvents(): void {
    this.panel.addEventListener("dblclick", (ev) => {
      const rect = this.panel.getBoundingClientRect();
      const x = (ev.clientX - rect.left) / rect.width;
      const y = (ev.clientY - rect.top) / rect.height;
      const placed = this.state.addObject(this.classPicker.value, x, y);
      this.selected = placed.id;
      this.afterMutation();
    });

    this.slider.addEventListener("input", () => {
      if (this.selected === null) return;
      this.state.replaceAppearance(this.selected, {
        mode: "archetype",
        ref: Number(this.slider.value),
      });
      this.afterMutation();
    });

    this.sizeSlider.addEventListener("input", () => {
      if (this.selected === null) return;
      this.state.resizeObject(this.selected, Number(this.sizeSlider.value));
      this.afterMutation();
    });

    document.getElementById("delete-btn")?.addEventListener("click", () => {
      if (this.selected === null) return;
      this.state.removeObject(this.selected);
      this.selected = null;
      this.afterMutation();
    });

    document.getElementById("save-btn")?.addEventListener("click", async () => {
      const id = this.sessionBox.value.trim();
      if (!id) return;
      await saveSession(id, this.state.toSessionDoc());
      this.status.textContent = `session ${id} saved`;
    });

    document.getElementById("load-btn")?.addEventListener("click", async () => {
      const id = this.sessionBox.value.trim();
      if (!id) return;
      this.state = PanelState.fromSessionDoc(await loadSession(id));
      this.selected = null;
      this.afterMutation();
    });

    const fileInput = document.getElementById("import-file") as HTMLInputElement;
    fileInput?.addEventListener("change", async () => {
      if (this.selected === null || !fileInput.files?.length) return;
      const obj = this.state.get(this.selected);
      const file = fileInput.files[0];
      const base64 = await fileToBase64(file);
      try {
        const imported = await importAppearance(base64, [0, 0, 1, 1], obj.className);
        this.state.replaceAppearance(this.selected, {
          mode: "imported",
          ref: imported.handle,
        });
        this.afterMutation();
      } catch (err) {
        this.status.textContent = `import failed: ${err}`;
      }
    });
  }

  afterMutation(): void {
    this.renderPanel();
    this.regen.call();
  }

  renderPanel(): void {
    this.panel.querySelectorAll(".object-chip").forEach((n) => n.remove());
    for (const obj of this.state.objects) {
      const chip = document.createElement("div");
      chip.className = "object-chip" + (obj.id === this.selected ? " selected" : "");
      chip.textContent = obj.className;
      chip.style.left = `${obj.x * 100}%`;
      chip.style.top = `${obj.y * 100}%`;
      chip.style.fontSize = `${fontSize(obj.sizeLevel)}px`;
      chip.addEventListener("pointerdown", (down) => {
        this.selected = obj.id;
        this.syncSliders();
        const rect = this.panel.getBoundingClientRect();
        const move = (ev: PointerEvent) => {
          this.state.dragObject(
            obj.id,
            (ev.clientX - rect.left) / rect.width,
            (ev.clientY - rect.top) / rect.height,
          );
          this.afterMutation();
        };
        const up = () => {
          window.removeEventListener("pointermove", move);
          window.removeEventListener("pointerup", up);
        };
        window.addEventListener("pointermove", move);
        window.addEventListener("pointerup", up);
        down.preventDefault();
      });
      this.panel.appendChild(chip);
    }
    this.graphPane.textContent = describeRelations(this.state);
    this.syncSliders();
  }

  syncSliders(): void {
    if (this.selected === null) return;
    const obj = this.state.get(this.selected);
    this.sizeSlider.value = String(obj.sizeLevel);
    const count = this.archetypeCounts.get(obj.className) ?? 1;
    this.slider.max = String(Math.max(count - 1, 0));
    if (obj.appearance.mode === "archetype") {
      this.slider.value = String(obj.appearance.ref);
    }
  }

  generateNow(): void {
    if (this.state.objects.length === 0) return;
    const body = {
      graph: this.state.toSceneGraph(),
      layout: this.state.toLayout(),
    };
    this.status.textContent = "rendering...";
    void this.inflight.run(
      () => generate(body),
      (res) => {
        this.output.src = `data:image/png;base64,${res.image_png_base64}`;
        this.status.textContent = `seed ${res.seed} in ${res.elapsed_ms.toFixed(0)} ms`;
        assertRelationParity(this.state.relations(), res.relations, this.status);
      },
      (err) => {
        this.status.textContent = `error: ${err}`;
      },
    );
  }
}

function describeRelations(state: PanelState): string {
  const names = new Map(state.objects.map((o) => [o.id, `${o.className}#${o.id}`]));
  return state
    .relations()
    .map((r) => `${names.get(r.subject)} --${r.predicate}--> ${names.get(r.object)}`)
    .join("\n");
}

// the client mirror must agree with the server on every response
function assertRelationParity(client: Relation[], server: Relation[],
                              status: HTMLSpanElement): void {
  const key = (rels: Relation[]) =>
    JSON.stringify(rels.map((r) => [r.subject, r.predicate, r.object]));
  if (key(client) !== key(server)) {
    status.textContent = "warning: client/server relation mismatch";
    console.error("relation mismatch", { client, server });
  }
}

function fileToBase64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      resolve(url.slice(url.indexOf(",") + 1));
    };
    reader.onerror = reject;
    reader.readAsDataURL(file);
  });
}

window.addEventListener("DOMContentLoaded", () => {
  void new App().start();
});
