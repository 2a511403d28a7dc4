// DOM wiring for the review queue.
//
// Layout: queue list on the left (poll-refreshed), layered viewer on the
// right (source image, segmentation colors, entropy heatmap with an
// opacity slider), decision buttons below.

import { TriageApi } from './api';
import { QueueItemDto } from './types';
import {
  buildQueueViewModel,
  entropyLegend,
  formatPredicted,
  metricsConsistent,
  ModelSummary,
  QueueViewModel,
  removeItem,
  whatIfThreshold,
} from './viewmodel';

const POLL_INTERVAL_MS = Number(
  new URLSearchParams(window.location.search).get('poll') ?? '5000',
);

const api = new TriageApi('');

const queueList = document.querySelector<HTMLUListElement>('#queue-list')!;
const modelBox = document.querySelector<HTMLElement>('#model-summary')!;
const metricsBox = document.querySelector<HTMLElement>('#metrics')!;
const thresholdInput = document.querySelector<HTMLInputElement>('#threshold')!;
const whatifBox = document.querySelector<HTMLElement>('#whatif')!;
const viewer = document.querySelector<HTMLElement>('#viewer')!;
const sourceLayer = document.querySelector<HTMLImageElement>('#layer-source')!;
const segLayer = document.querySelector<HTMLImageElement>('#layer-segmentation')!;
const entropyLayer = document.querySelector<HTMLImageElement>('#layer-entropy')!;
const opacitySlider = document.querySelector<HTMLInputElement>('#entropy-opacity')!;
const legendMin = document.querySelector<HTMLElement>('#legend-min')!;
const legendMax = document.querySelector<HTMLElement>('#legend-max')!;
const detailTitle = document.querySelector<HTMLElement>('#detail-title')!;
const acceptBtn = document.querySelector<HTMLButtonElement>('#accept')!;
const annotateBtn = document.querySelector<HTMLButtonElement>('#annotate')!;
const labelUpload = document.querySelector<HTMLInputElement>('#label-upload')!;
const fitBtn = document.querySelector<HTMLButtonElement>('#fit-model')!;

let vm: QueueViewModel = { rows: [], model: null, threshold: null };
let items: QueueItemDto[] = [];
let selected: QueueItemDto | null = null;

function toBase64(bytes: Uint8Array): string {
  let binary = '';
  bytes.forEach((b) => {
    binary += String.fromCharCode(b);
  });
  return btoa(binary);
}

function renderQueue(): void {
  queueList.replaceChildren();
  for (const row of vm.rows) {
    const li = document.createElement('li');
    li.dataset.itemId = row.itemId;
    const quality = document.createElement('span');
    quality.className = 'quality';
    quality.textContent = row.predictedDiceDisplay;
    const name = document.createElement('span');
    name.className = 'image-id';
    name.textContent = row.imageId;
    const uncertain = document.createElement('span');
    uncertain.className = 'dominant';
    uncertain.textContent = row.dominantUncertainClass ?? '';
    li.append(quality, name, uncertain);
    if (selected && selected.item_id === row.itemId) li.classList.add('selected');
    li.addEventListener('click', () => selectItem(row.itemId));
    queueList.appendChild(li);
  }
}

function renderModel(): void {
  if (!vm.model) {
    modelBox.textContent = 'No model fitted yet.';
    return;
  }
  const preds = vm.model.includedPredictors.join(', ') || 'none';
  const r2 = vm.model.rSquared === null ? 'n/a' : vm.model.rSquared.toFixed(3);
  modelBox.textContent = `Model v${vm.model.version} | R² ${r2} | predictors: ${preds}`;
}

function renderWhatIf(): void {
  const t = Number(thresholdInput.value);
  if (!Number.isFinite(t)) {
    whatifBox.textContent = '';
    return;
  }
  const summary = whatIfThreshold(items, t);
  const pct = (summary.projectedHumanShare * 100).toFixed(0);
  whatifBox.textContent =
    `${summary.below} below / ${summary.above} above cutoff ` +
    `(${summary.unscored} unscored) -> ~${pct}% human workload`;
}

async function renderMetrics(): Promise<void> {
  const metrics = await api.getMetrics();
  const ok = metricsConsistent(metrics) ? '' : ' (INCONSISTENT)';
  metricsBox.textContent =
    `pending ${metrics.by_status.pending} | accepted ${metrics.by_status.accepted} ` +
    `| annotated ${metrics.by_status.annotated} | total ${metrics.total}${ok}`;
}

function selectItem(itemId: string): void {
  const item = items.find((i) => i.item_id === itemId) ?? null;
  selected = item;
  if (!item) return;
  const numClasses = item.dims[1];
  const legend = entropyLegend(numClasses);
  legendMin.textContent = legend.minLabel;
  legendMax.textContent = legend.maxLabel;
  detailTitle.textContent =
    `${item.image_id} | predicted ${formatPredicted(item.predicted_mean_dice)}`;
  sourceLayer.src = api.sourceUrl(item.item_id);
  sourceLayer.onerror = () => {
    sourceLayer.removeAttribute('src');
    sourceLayer.style.display = 'none';
  };
  sourceLayer.style.display = '';
  segLayer.src = api.overlayUrl(item.item_id, 'segmentation');
  entropyLayer.src = api.overlayUrl(item.item_id, 'entropy');
  viewer.classList.remove('hidden');
  renderQueue();
}

async function decide(action: 'accept' | 'annotate'): Promise<void> {
  if (!selected) return;
  let labelBase64: string | undefined;
  if (action === 'annotate' && labelUpload.files && labelUpload.files[0]) {
    const buf = new Uint8Array(await labelUpload.files[0].arrayBuffer());
    labelBase64 = toBase64(buf);
  }
  const itemId = selected.item_id;
  await api.decide(itemId, action, labelBase64);
  vm = removeItem(vm, itemId); // optimistic removal
  selected = null;
  viewer.classList.add('hidden');
  renderQueue();
  await renderMetrics();
}

async function refresh(): Promise<void> {
  const [queue, model] = await Promise.all([api.getQueue(), api.getModel()]);
  items = queue.items;
  const summary: ModelSummary | null = model
    ? {
        version: model.model_version,
        rSquared: model.model.r_squared,
        includedPredictors: model.model.included_predictors.map(String),
      }
    : null;
  vm = buildQueueViewModel(items, summary, vm.threshold);
  renderQueue();
  renderModel();
  renderWhatIf();
  await renderMetrics();
}

opacitySlider.addEventListener('input', () => {
  entropyLayer.style.opacity = String(Number(opacitySlider.value) / 100);
});
thresholdInput.addEventListener('input', renderWhatIf);
acceptBtn.addEventListener('click', () => void decide('accept'));
annotateBtn.addEventListener('click', () => void decide('annotate'));
fitBtn.addEventListener('click', async () => {
  await api.fitModel(0.05);
  await refresh();
});

void refresh();
setInterval(() => void refresh(), POLL_INTERVAL_MS);
