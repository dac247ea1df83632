// Entry point: wire up the two panels once the document is ready.

import { initDashboard } from './dashboard.js';
import { initPlayerView } from './playerview.js';

function start(): void {
  initPlayerView();
  initDashboard();
}

if (document.readyState === 'loading') {
  document.addEventListener('DOMContentLoaded', start);
} else {
  start();
}
