/** Bootstraps the console: 1 s event polling keeps the view converged
 * to server state; every action round-trips and then refreshes. */
import { ApiClient, ApiError } from "./api.js";
import { renderApp } from "./render.js";
import {
  AppState,
  applyEvents,
  applySnapshot,
  initialState,
  withError,
} from "./state.js";
import { drawSample } from "./sketch.js";

const api = new ApiClient("");
let state: AppState = initialState();
const sketched = new Map<string, HTMLCanvasElement>();

function root(): HTMLElement {
  return document.getElementById("app") as HTMLElement;
}

async function refresh(): Promise<void> {
  // status first: it computes this round's proposals, whose events must
  // precede the events fetch
  const status = await api.status();
  const [{ events }, queue] = await Promise.all([api.events(state.cursor), api.queue()]);
  state = applySnapshot(applyEvents(state, events), status, queue);
  render();
}

function render(): void {
  sketched.clear();
  renderApp(root(), state, handlers);
}

async function act(action: () => Promise<unknown>): Promise<void> {
  try {
    await action();
    state = withError(state, null);
  } catch (err) {
    state = withError(state, err instanceof ApiError
      ? `${err.status}: ${err.message}` : String(err));
  }
  await refresh();
}

const handlers = {
  onLabel: (id: string, classId: number) => void act(() => api.label(id, classId)),
  onApprove: (proposalId: string, name: string) => void act(async () => {
    if (!name) {
      throw new ApiError(400, "a new class needs a name");
    }
    const cls = name && state.status?.classes.find((c) => c.name === name);
    const classId = cls ? cls.id : (await api.addClass(name)).id;
    await api.approveProposal(proposalId, classId);
  }),
  onReject: (proposalId: string) => void act(() => api.rejectProposal(proposalId)),
  onRetrain: () => void act(() => api.retrain()),
  onShowSample: (id: string, canvas: HTMLCanvasElement) => {
    if (sketched.get(id) === canvas) {
      return;
    }
    sketched.set(id, canvas);
    api.sample(id).then((detail) => drawSample(canvas, detail.sample)).catch(() => {});
  },
};

async function poll(): Promise<void> {
  try {
    const { events } = await api.events(state.cursor);
    if (events.length > 0 || state.status === null) {
      await refresh();
    }
  } catch {
    // transient network failures surface on the next successful poll
  }
}

refresh().catch((err) => {
  state = withError(state, String(err));
  render();
});
setInterval(poll, 1000);
