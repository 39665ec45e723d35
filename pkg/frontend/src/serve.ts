/**
 * Development server: static cockpit files plus an /api proxy to the
 * recommendation service, so the browser sees a single origin.
 *
 *   COCKPIT_PORT  listen port (default 5173)
 *   COCKPIT_API   upstream service (default http://127.0.0.1:8000)
 */

import http from 'node:http';
import { readFile } from 'node:fs/promises';
import path from 'node:path';
import { fileURLToPath } from 'node:url';

const PORT = Number(process.env.COCKPIT_PORT ?? 5173);
const API = (process.env.COCKPIT_API ?? 'http://127.0.0.1:8000').replace(/\/$/, '');

// dist/serve.js -> the frontend directory holding index.html and dist/.
const ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), '..');

const MIME: Record<string, string> = {
  '.html': 'text/html; charset=utf-8',
  '.js': 'text/javascript; charset=utf-8',
  '.css': 'text/css; charset=utf-8',
  '.map': 'application/json',
  '.json': 'application/json',
};

async function proxy(req: http.IncomingMessage, res: http.ServerResponse): Promise<void> {
  const target = API + (req.url ?? '').replace(/^\/api/, '');
  const chunks: Buffer[] = [];
  for await (const chunk of req) chunks.push(chunk as Buffer);
  try {
    const upstream = await fetch(target, {
      method: req.method,
      headers: { 'Content-Type': req.headers['content-type'] ?? 'application/json' },
      body: chunks.length > 0 ? Buffer.concat(chunks) : undefined,
    });
    res.writeHead(upstream.status, {
      'Content-Type': upstream.headers.get('content-type') ?? 'application/json',
    });
    res.end(Buffer.from(await upstream.arrayBuffer()));
  } catch {
    res.writeHead(502, { 'Content-Type': 'application/json' });
    res.end(JSON.stringify({ error: { code: 'upstream-down', message: target } }));
  }
}

async function serveStatic(url: string, res: http.ServerResponse): Promise<void> {
  const rel = url === '/' ? 'index.html' : url.replace(/^\//, '').split('?')[0]!;
  const file = path.join(ROOT, rel);
  if (!file.startsWith(ROOT + path.sep) || rel.includes('..')) {
    res.writeHead(403);
    res.end();
    return;
  }
  try {
    const body = await readFile(file);
    res.writeHead(200, { 'Content-Type': MIME[path.extname(file)] ?? 'application/octet-stream' });
    res.end(body);
  } catch {
    res.writeHead(404, { 'Content-Type': 'text/plain' });
    res.end('not found');
  }
}

http
  .createServer((req, res) => {
    const url = req.url ?? '/';
    if (url.startsWith('/api/')) {
      void proxy(req, res);
    } else {
      void serveStatic(url, res);
    }
  })
  .listen(PORT, () => {
    console.log(`cockpit on http://127.0.0.1:${PORT} -> ${API}`);
  });
