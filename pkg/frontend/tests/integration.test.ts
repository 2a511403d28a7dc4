// End-to-end against the real review service: spawns `segtriage serve`,
// ingests a small synthetic corpus, and drives the queue through the
// typed client exactly as the browser app would.

import { spawn, spawnSync, ChildProcess } from 'node:child_process';
import { mkdtempSync, readdirSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { TriageApi } from '../src/api';
import {
  buildQueueViewModel,
  entropyLegend,
  metricsConsistent,
} from '../src/viewmodel';

const PORT = 8900 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;

// the suite needs the segtriage package on the local python3
const probe = spawnSync('python3', ['-c', 'import segtriage'], {
  encoding: 'utf-8',
});
const serviceAvailable = probe.status === 0;

let service: ChildProcess | null = null;
let workDir = '';
const api = new TriageApi(BASE);

async function waitForService(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/v1/metrics`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error('service did not become ready');
}

beforeAll(async () => {
  if (!serviceAvailable) return;
  workDir = mkdtempSync(join(tmpdir(), 'segtriage-ui-'));
  const corpusDir = join(workDir, 'corpus');
  const gen = spawnSync(
    'python3',
    [
      '-m', 'segtriage.cli', 'gen',
      '--output', corpusDir,
      '--images', '10',
      '--passes', '2',
      '--classes', '3',
      '--height', '16',
      '--width', '16',
      '--coupling', '0.95',
      '--seed', '77',
    ],
    { encoding: 'utf-8' },
  );
  expect(gen.status, gen.stderr).toBe(0);

  service = spawn(
    'python3',
    [
      '-m', 'segtriage.cli', 'serve',
      '--data-dir', join(workDir, 'data'),
      '--host', '127.0.0.1',
      '--port', String(PORT),
    ],
    { stdio: 'ignore' },
  );
  await waitForService();

  for (const file of readdirSync(corpusDir).filter((f) => f.endsWith('.ubnd')).sort()) {
    const bytes = readFileSync(join(corpusDir, file));
    await api.ingestBundle(bytes);
  }
}, 60_000);

afterAll(() => {
  service?.kill();
  if (workDir) rmSync(workDir, { recursive: true, force: true });
});

describe.skipIf(!serviceAvailable)('review UI against the live service', () => {
  it('renders the queue in exactly the service order', async () => {
    await api.fitModel(0.05);
    const queue = await api.getQueue();
    const model = await api.getModel();
    expect(model).not.toBeNull();
    const vm = buildQueueViewModel(queue.items, {
      version: model!.model_version,
      rSquared: model!.model.r_squared,
      includedPredictors: model!.model.included_predictors.map(String),
    });
    expect(vm.rows.map((r) => r.itemId)).toEqual(
      queue.items.map((i) => i.item_id),
    );
    // service invariant surfaced to the UI: ascending predicted quality
    const preds = queue.items.map((i) => i.predicted_mean_dice!);
    const sorted = [...preds].sort((a, b) => a - b);
    expect(preds).toEqual(sorted);
  });

  it('decision round-trip keeps metrics consistent', async () => {
    const before = await api.getMetrics();
    expect(metricsConsistent(before)).toBe(true);
    const queue = await api.getQueue();
    const target = queue.items[0];

    const decided = await api.decide(target.item_id, 'annotate', undefined, 'ui-test');
    expect(decided.status).toBe('annotated');
    expect(decided.decided_by).toBe('ui-test');

    const after = await api.getMetrics();
    expect(metricsConsistent(after)).toBe(true);
    expect(after.by_status.annotated).toBe(before.by_status.annotated + 1);
    expect(after.by_status.pending).toBe(before.by_status.pending - 1);
    expect(after.total).toBe(before.total);

    const refreshed = await api.getQueue();
    expect(refreshed.items.find((i) => i.item_id === target.item_id)).toBeUndefined();
  });

  it('entropy legend endpoints agree with the service scaling', async () => {
    const queue = await api.getQueue();
    const numClasses = queue.items[0].dims[1];
    const legend = entropyLegend(numClasses);
    expect(legend.minValue).toBe(0);
    expect(legend.maxValue).toBeCloseTo(Math.log(numClasses), 12);

    // the overlay endpoint advertises the same maximum
    const resp = await fetch(
      api.overlayUrl(queue.items[0].item_id, 'entropy'),
    );
    expect(resp.status).toBe(200);
    const advertised = Number(resp.headers.get('x-entropy-max'));
    expect(advertised).toBeCloseTo(legend.maxValue, 12);
  });

  it('accept decision also round-trips', async () => {
    const queue = await api.getQueue();
    const target = queue.items[queue.items.length - 1];
    const decided = await api.decide(target.item_id, 'accept');
    expect(decided.status).toBe('accepted');
    const metrics = await api.getMetrics();
    expect(metricsConsistent(metrics)).toBe(true);
  });
});
