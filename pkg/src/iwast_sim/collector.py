"""Collector service: uplink ingestion, storage, query/export, live
push, and proxied configurator sessions for simulated runs.

Single-file sqlite storage keyed by (device_id, fcnt, slot, metric)
makes ingestion idempotent; queries sort by time, so replay order does
not matter.  All timestamps are seconds of simulated time.
"""

import asyncio
import csv
import io
import json
import sqlite3
import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, Request, WebSocket, \
    WebSocketDisconnect
from fastapi.responses import PlainTextResponse

from . import bus, radio
from .configurator import SessionServer
from .engine import Simulator, load_trace
from .scenarios import config_from_json

PERIOD_SECONDS = {
    "Day": 86400.0,
    "Week": 7 * 86400.0,
    "Month": 30 * 86400.0,
    "Year": 365 * 86400.0,
    "All": None,
}

CSV_HEADER = ["device_id", "slot", "metric", "unit", "timestamp_s", "value"]


class Store:
    """Lock-serialized sqlite wrapper (reads share the connection)."""

    def __init__(self, path: str = ":memory:"):
        self.conn = sqlite3.connect(path, check_same_thread=False)
        self.lock = threading.Lock()
        with self.lock:
            self.conn.execute(
                "CREATE TABLE IF NOT EXISTS measurements ("
                " device_id TEXT NOT NULL,"
                " fcnt INTEGER NOT NULL,"
                " slot INTEGER NOT NULL,"
                " metric TEXT NOT NULL,"
                " unit TEXT NOT NULL,"
                " value REAL NOT NULL,"
                " timestamp_s REAL NOT NULL,"
                " session TEXT NOT NULL DEFAULT '',"
                " PRIMARY KEY (device_id, fcnt, slot, metric))")
            self.conn.commit()

    def insert(self, rows):
        """INSERT OR IGNORE; returns the rows that were actually new."""
        inserted = []
        with self.lock:
            for row in rows:
                cur = self.conn.execute(
                    "INSERT OR IGNORE INTO measurements"
                    " (device_id, fcnt, slot, metric, unit, value,"
                    "  timestamp_s, session)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (row["device_id"], row["fcnt"], row["slot"],
                     row["metric"], row["unit"], row["value"],
                     row["timestamp_s"], row["session"]))
                if cur.rowcount:
                    inserted.append(row)
            self.conn.commit()
        return inserted

    def devices(self):
        with self.lock:
            rows = self.conn.execute(
                "SELECT device_id, COUNT(*), MAX(timestamp_s),"
                " MAX(session)"
                " FROM measurements GROUP BY device_id"
                " ORDER BY device_id").fetchall()
            out = []
            for device_id, count, last_seen, session in rows:
                metrics = [r[0] for r in self.conn.execute(
                    "SELECT DISTINCT metric FROM measurements"
                    " WHERE device_id = ? ORDER BY metric",
                    (device_id,))]
                out.append({"device_id": device_id, "rows": count,
                            "last_seen_s": last_seen, "session": session,
                            "metrics": metrics})
        return out

    def device_exists(self, device_id: str) -> bool:
        with self.lock:
            row = self.conn.execute(
                "SELECT 1 FROM measurements WHERE device_id = ? LIMIT 1",
                (device_id,)).fetchone()
        return row is not None

    def metrics(self, device_id: str):
        with self.lock:
            rows = self.conn.execute(
                "SELECT metric, unit, COUNT(*), MIN(timestamp_s),"
                " MAX(timestamp_s)"
                " FROM measurements WHERE device_id = ?"
                " GROUP BY metric, unit ORDER BY metric",
                (device_id,)).fetchall()
        return [{"metric": m, "unit": u, "rows": c,
                 "first_s": lo, "last_s": hi}
                for m, u, c, lo, hi in rows]

    def series(self, device_id: str, metric: str, period: str,
               now=None):
        window = PERIOD_SECONDS[period]
        with self.lock:
            if now is None:
                row = self.conn.execute(
                    "SELECT MAX(timestamp_s) FROM measurements"
                    " WHERE device_id = ?", (device_id,)).fetchone()
                now = row[0] if row and row[0] is not None else 0.0
            query = ("SELECT timestamp_s, value FROM measurements"
                     " WHERE device_id = ? AND metric = ?")
            args = [device_id, metric]
            if window is not None:
                query += " AND timestamp_s >= ? AND timestamp_s <= ?"
                args += [now - window, now]
            query += " ORDER BY timestamp_s, fcnt"
            rows = self.conn.execute(query, args).fetchall()
        return [[t, v] for t, v in rows]

    def export_rows(self):
        with self.lock:
            rows = self.conn.execute(
                "SELECT device_id, slot, metric, unit, timestamp_s, value"
                " FROM measurements"
                " ORDER BY device_id, timestamp_s, slot, metric").fetchall()
        return rows


def rows_from_wire(wire: dict, session: str = ""):
    """Decode one delivery-format uplink into storage rows.

    Raises ValueError subclasses on malformed input; callers map those
    to 400 BadPayload.
    """
    for key in ("device_id", "fcnt", "payload", "tx_time_s"):
        if key not in wire:
            raise ValueError("missing field {}".format(key))
    payload = bytes.fromhex(wire["payload"])
    records = radio.decode_uplink(payload)
    rows = []
    for record in records:
        rows.append({
            "device_id": wire["device_id"],
            "fcnt": int(wire["fcnt"]),
            "slot": record.slot,
            "metric": record.kind.name,
            "unit": bus.UNITS[record.kind],
            "value": record.value,
            "timestamp_s": float(wire["tx_time_s"]),
            "session": session,
        })
    return rows


class RunManager:
    """In-memory registry of simulation runs started over the API."""

    def __init__(self):
        self.lock = threading.Lock()
        self.runs = {}
        self._counter = 0

    def new_id(self) -> str:
        with self.lock:
            self._counter += 1
            return "r{}".format(self._counter)


def create_app(db_path: str = ":memory:") -> FastAPI:
    @asynccontextmanager
    async def lifespan(app):
        app.state.loop = asyncio.get_running_loop()
        yield

    app = FastAPI(title="iwast collector", lifespan=lifespan)
    store = Store(db_path)
    runs = RunManager()
    live_clients = set()
    app.state.store = store

    def broadcast(rows):
        loop = getattr(app.state, "loop", None)
        if loop is None:
            return
        for queue in list(live_clients):
            for row in rows:
                loop.call_soon_threadsafe(queue.put_nowait, row)

    def ingest_wire(wire: dict, session: str = ""):
        try:
            rows = rows_from_wire(wire, session)
        except (ValueError, radio.BadLength,
                radio.UnknownMetricId) as exc:
            raise HTTPException(
                status_code=400,
                detail="BadPayload: {}".format(exc))
        inserted = store.insert(rows)
        broadcast(inserted)
        return len(inserted)

    @app.post("/api/uplink")
    async def post_uplink(request: Request):
        wire = await request.json()
        session = wire.get("session", "")
        count = await asyncio.to_thread(ingest_wire, wire, session)
        return {"stored": count}

    @app.get("/api/devices")
    def get_devices():
        return store.devices()

    @app.get("/api/devices/{device_id}/metrics")
    def get_metrics(device_id: str):
        if not store.device_exists(device_id):
            raise HTTPException(status_code=404, detail="UnknownDevice")
        return store.metrics(device_id)

    @app.get("/api/devices/{device_id}/series")
    def get_series(device_id: str, metric: str, period: str = "All",
                   now: float = None):
        if not store.device_exists(device_id):
            raise HTTPException(status_code=404, detail="UnknownDevice")
        if period not in PERIOD_SECONDS:
            raise HTTPException(
                status_code=400,
                detail="period must be one of {}".format(
                    sorted(PERIOD_SECONDS)))
        series = store.series(device_id, metric, period, now)
        return {"device_id": device_id, "metric": metric,
                "period": period, "series": series}

    @app.get("/api/export.csv")
    def export_csv():
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in store.export_rows():
            writer.writerow(row)
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    @app.websocket("/api/live")
    async def ws_live(ws: WebSocket):
        await ws.accept()
        queue = asyncio.Queue()
        live_clients.add(queue)
        try:
            while True:
                row = await queue.get()
                await ws.send_json(row)
        except WebSocketDisconnect:
            pass
        finally:
            live_clients.discard(queue)

    # -- simulation control ---------------------------------------------

    def build_simulator(doc: dict) -> Simulator:
        topology = {int(slot): kind
                    for slot, kind in doc["topology"].items()}
        config = config_from_json(doc["config"])
        if "trace" in doc:
            trace = load_trace(io.StringIO(doc["trace"]))
        else:
            trace = load_trace(doc["trace_path"])
        return Simulator(topology, config, trace,
                         float(doc["horizon_s"]),
                         seed=int(doc.get("seed", 0)))

    def ingest_run(entry):
        result = entry["result"]
        stored = 0
        for wire in result.uplinks:
            stored += ingest_wire(dict(wire), entry["session"])
        entry["stored"] = stored

    def run_to_completion(entry):
        sim = entry["sim"]
        entry["result"] = sim.run()
        entry["state"] = "completed"
        ingest_run(entry)

    @app.post("/api/sim/runs")
    async def post_run(request: Request):
        doc = await request.json()
        try:
            sim = build_simulator(doc)
        except (KeyError, ValueError) as exc:
            raise HTTPException(
                status_code=400, detail="BadScenario: {}".format(exc))
        run_id = runs.new_id()
        entry = {"id": run_id, "sim": sim, "result": None,
                 "state": "created", "stored": 0,
                 "session": doc.get("session", run_id)}
        with runs.lock:
            runs.runs[run_id] = entry
        if doc.get("pause_for_configure"):
            sim.prime()
            sim._on_usb_attach(0.0, None)
            entry["cfg_session"] = SessionServer(
                sim.mb, now_fn=lambda: sim.now).open()
            entry["state"] = "configuring"
        else:
            await asyncio.to_thread(run_to_completion, entry)
        return {"id": run_id, "state": entry["state"]}

    def find_run(run_id: str):
        with runs.lock:
            entry = runs.runs.get(run_id)
        if entry is None:
            raise HTTPException(status_code=404, detail="UnknownRun")
        return entry

    @app.get("/api/sim/runs/{run_id}/status")
    def run_status(run_id: str):
        entry = find_run(run_id)
        result = entry["result"]
        status = {
            "id": entry["id"],
            "state": entry["state"],
            "stored": entry["stored"],
            "device_state": entry["sim"].mb.state,
            "report": result.report if result is not None else None,
        }
        if result is not None:
            status["uplinks"] = len(result.uplinks)
            status["depleted"] = result.depleted
        return status

    @app.post("/api/sim/runs/{run_id}/configure")
    async def run_configure(run_id: str, request: Request):
        entry = find_run(run_id)
        body = await request.json()
        line = body.get("line", "").strip()
        if entry["state"] != "configuring":
            raise HTTPException(
                status_code=409,
                detail="run is {}, not configuring".format(entry["state"]))
        if line.upper() == "DETACH":
            sim = entry["sim"]
            entry["cfg_session"].close()
            sim._on_usb_detach(sim.now, None)
            entry["state"] = "running"
            await asyncio.to_thread(run_to_completion, entry)
            return {"reply": "OK detached"}
        if line.upper().startswith("REBOOT"):
            return {"reply":
                    "ERR BadCommand REBOOT is not available over the "
                    "sim proxy, finish with DETACH"}
        reply = entry["cfg_session"].handle_line(line)
        return {"reply": reply}

    return app
