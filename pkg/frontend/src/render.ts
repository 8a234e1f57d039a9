/** DOM rendering. The whole view re-renders from state on every change;
 * action handlers are wired through data attributes. */
import { AppState, canRetrain, formatRate, formatScore, openProposals } from "./state.js";
import { renderTrend } from "./trend.js";
import type { EntryCard } from "./types.js";

export interface Handlers {
  onLabel(id: string, classId: number): void;
  onApprove(proposalId: string, name: string): void;
  onReject(proposalId: string): void;
  onRetrain(): void;
  onShowSample(id: string, canvas: HTMLCanvasElement): void;
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) =>
    ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;" }[c] as string));
}

function classOptions(state: AppState): string {
  const classes = state.status?.classes ?? [];
  return classes.map((c) => `<option value="${c.id}">${escapeHtml(c.name)}</option>`).join("");
}

function className(state: AppState, id: number): string {
  const found = (state.status?.classes ?? []).find((c) => c.id === id);
  return found ? found.name : `#${id}`;
}

function entryCard(state: AppState, entry: EntryCard): string {
  const v = entry.verdict;
  const badges = [
    v.mismatch_flag ? `<span class="badge mismatch">mismatch ${formatScore(v.mismatch_score)}</span>` : "",
    v.context_flag ? `<span class="badge context">context ${formatScore(v.context_distance)}</span>` : "",
  ].join(" ");
  return `
    <article class="card" data-entry="${escapeHtml(entry.id)}">
      <header>
        <strong>${escapeHtml(entry.id)}</strong> ${badges}
      </header>
      <p class="preds">
        face says <b>${escapeHtml(className(state, v.face_label))}</b>,
        posture says <b>${escapeHtml(className(state, v.posture_label))}</b>
      </p>
      <canvas width="220" height="110" data-sketch="${escapeHtml(entry.id)}"></canvas>
      <div class="actions">
        <select data-class-select="${escapeHtml(entry.id)}">${classOptions(state)}</select>
        <button data-label="${escapeHtml(entry.id)}">Label</button>
      </div>
    </article>`;
}

export function renderApp(root: HTMLElement, state: AppState, handlers: Handlers): void {
  const status = state.status;
  const proposals = openProposals(state);
  root.innerHTML = `
    <header class="topbar">
      <h1>Novelty triage</h1>
      <div class="stats">
        bundle v${status?.bundle_version ?? "?"} ·
        ${status?.pending ?? 0} pending ·
        ${status?.buffer_size ?? 0} buffered ·
        classes: ${(status?.classes ?? []).map((c) => escapeHtml(c.name)).join(", ")}
      </div>
    </header>
    ${state.lastError ? `<div class="error">${escapeHtml(state.lastError)}</div>` : ""}
    <section class="panel">
      <h2>Pending samples (${state.entries.length})</h2>
      <div class="cards" id="pending-cards">
        ${state.entries.map((e) => entryCard(state, e)).join("")
          || '<p class="muted">Queue is empty.</p>'}
      </div>
    </section>
    <section class="panel">
      <h2>New-class proposals (${proposals.length})</h2>
      ${proposals.map((p) => `
        <article class="card proposal" data-proposal="${escapeHtml(p.proposal_id)}">
          <header><strong>${escapeHtml(p.proposal_id)}</strong>
            · ${p.member_count} members</header>
          <div class="actions">
            <input type="text" placeholder="new class name"
                   data-name-input="${escapeHtml(p.proposal_id)}">
            <button data-approve="${escapeHtml(p.proposal_id)}">Approve</button>
            <button data-reject="${escapeHtml(p.proposal_id)}">Reject</button>
          </div>
        </article>`).join("") || '<p class="muted">No open proposals.</p>'}
    </section>
    <section class="panel">
      <h2>Retraining</h2>
      <button id="retrain" ${canRetrain(state) ? "" : "disabled"}>Retrain now</button>
      <div class="trend-box">${renderTrend(state.reports)}</div>
      ${state.reports.length ? `<p>last run: ${formatRate(
        state.reports[state.reports.length - 1].mismatch_before)} →
        ${formatRate(state.reports[state.reports.length - 1].mismatch_after)}</p>` : ""}
    </section>`;

  for (const button of root.querySelectorAll<HTMLButtonElement>("[data-label]")) {
    button.addEventListener("click", () => {
      const id = button.dataset.label as string;
      const select = root.querySelector<HTMLSelectElement>(
        `[data-class-select="${CSS.escape(id)}"]`);
      if (select) {
        handlers.onLabel(id, parseInt(select.value, 10));
      }
    });
  }
  for (const button of root.querySelectorAll<HTMLButtonElement>("[data-approve]")) {
    button.addEventListener("click", () => {
      const pid = button.dataset.approve as string;
      const input = root.querySelector<HTMLInputElement>(
        `[data-name-input="${CSS.escape(pid)}"]`);
      handlers.onApprove(pid, input?.value.trim() || "");
    });
  }
  for (const button of root.querySelectorAll<HTMLButtonElement>("[data-reject]")) {
    button.addEventListener("click", () => handlers.onReject(button.dataset.reject as string));
  }
  root.querySelector<HTMLButtonElement>("#retrain")
    ?.addEventListener("click", () => handlers.onRetrain());
  for (const canvas of root.querySelectorAll<HTMLCanvasElement>("[data-sketch]")) {
    handlers.onShowSample(canvas.dataset.sketch as string, canvas);
  }
}
