"""Configurator tool: session protocol, transports, and the CLI.

The wire protocol is newline-delimited ASCII with one reply line per
command, prefixed "OK " or "ERR ".  Verbs: LIST, GET, SET, SAVE,
REBOOT.  Values staged with SET survive the session but die on a
reboot without SAVE.
"""

import argparse
import json
import socket
import socketserver
import sys
import threading

from . import bus
from .motherboard import (InvalidConfigValue, Motherboard, NvmWriteFailed,
                          UnknownMetric)


class NoDevice(Exception):
    """No motherboard in its configuration window at the address."""


class SessionClosed(Exception):
    """Command issued on a session that was closed."""


class Busy(Exception):
    """Another configurator session is already open."""


class ProtocolError(Exception):
    """Device replied ERR; .code carries the first token."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__((code + " " + detail).strip())
        self.code = code
        self.detail = detail


VERBS = ("LIST", "GET", "SET", "SAVE", "REBOOT")


class SessionServer:
    """Device-side half: executes command lines against a motherboard."""

    def __init__(self, mb: Motherboard, now_fn=None, on_reboot=None):
        self.mb = mb
        self.now_fn = now_fn or (lambda: 0.0)
        self.on_reboot = on_reboot
        self.closed = True

    def open(self):
        if self.mb.state != "configure":
            raise NoDevice(
                "motherboard is in state %r, not configure" % self.mb.state)
        if self.mb.session_open:
            raise Busy("another session is open")
        self.mb.session_open = True
        self.closed = False
        return self

    def close(self):
        if not self.closed:
            self.closed = True
            self.mb.session_open = False

    def handle_line(self, line: str) -> str:
        if self.closed:
            raise SessionClosed("session is closed")
        parts = line.strip().split()
        if not parts:
            return "ERR BadCommand empty line"
        verb = parts[0].upper()
        try:
            if verb == "LIST":
                return "OK " + json.dumps(self._topology(),
                                          sort_keys=True)
            if verb == "GET":
                slot, metric = int(parts[1]), int(parts[2])
                return "OK " + json.dumps(self._metric_doc(slot, metric),
                                          sort_keys=True)
            if verb == "SET":
                slot, metric = int(parts[1]), int(parts[2])
                return self._do_set(slot, metric, parts[3:])
            if verb == "SAVE":
                blob = self.mb.save(self.now_fn())
                return "OK saved {} bytes".format(len(blob))
            if verb == "REBOOT":
                self.close()
                if self.on_reboot is not None:
                    self.on_reboot()
                return "OK rebooting"
            return "ERR BadCommand unknown verb {}".format(verb)
        except UnknownMetric as exc:
            return "ERR UnknownMetric {}".format(exc.args[0])
        except InvalidConfigValue as exc:
            return "ERR InvalidConfigValue {}".format(exc)
        except NvmWriteFailed as exc:
            return "ERR NvmWriteFailed {}".format(exc)
        except (IndexError, ValueError) as exc:
            return "ERR BadCommand {}".format(exc)

    def _topology(self):
        boards = []
        for slot in sorted(self.mb.boards):
            descriptor = self.mb.boards[slot].descriptor
            boards.append({
                "slot": slot,
                "type": descriptor.board_type.name.lower(),
                "fw": "{}.{}".format(*descriptor.firmware_version),
                "metrics": [self._metric_doc(slot, i)
                            for i in range(len(descriptor.metrics))],
            })
        return {"boards": boards}

    def _metric_doc(self, slot: int, metric: int):
        kind = self.mb.metric_kind(slot, metric)
        cfg = self.mb.effective_config(slot, metric)
        return {
            "slot": slot,
            "metric": metric,
            "kind": kind.name,
            "unit": bus.UNITS[kind],
            "scale": bus.SCALE_LSB[kind],
            "poll_s": cfg.poll_interval_s,
            "threshold": cfg.threshold_enabled,
            "low": cfg.low,
            "high": cfg.high,
        }

    def _do_set(self, slot: int, metric: int, args):
        kind = self.mb.metric_kind(slot, metric)
        changes = {}
        for arg in args:
            if "=" not in arg:
                return "ERR BadCommand expected key=value, got {}".format(arg)
            key, value = arg.split("=", 1)
            if key == "poll":
                changes["poll_interval_s"] = int(value)
            elif key == "low":
                changes["low"] = int(value)
            elif key == "high":
                changes["high"] = int(value)
            elif key == "threshold":
                if value == "on":
                    changes["threshold_enabled"] = True
                elif value == "off":
                    changes["threshold_enabled"] = False
                else:
                    # engineering shorthand: enable and set the upper
                    # bound in the metric's unit
                    changes["threshold_enabled"] = True
                    changes["high"] = bus.encode_value(kind, float(value))
            else:
                return "ERR BadCommand unknown key {}".format(key)
        self.mb.stage_set(slot, metric, **changes)
        return "OK"


# -- Transports --------------------------------------------------------------


class InProcessTransport:
    """Direct binding to a SessionServer (tests, embedded use)."""

    def __init__(self, session: SessionServer):
        self.session = session
        self.session.open()

    def send_line(self, line: str) -> str:
        return self.session.handle_line(line)

    def close(self):
        self.session.close()


class SocketTransport:
    """Line protocol over a unix or TCP socket."""

    def __init__(self, address: str):
        try:
            if address.startswith("unix:"):
                sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
                sock.connect(address[len("unix:"):])
            elif address.startswith("tcp:"):
                host, port = address[len("tcp:"):].rsplit(":", 1)
                sock = socket.create_connection((host, int(port)))
            else:
                raise ValueError("unsupported address %r" % (address,))
        except OSError as exc:
            raise ConnectionError(str(exc)) from exc
        self._sock = sock
        self._file = sock.makefile("rw", encoding="ascii", newline="\n")

    def send_line(self, line: str) -> str:
        self._file.write(line + "\n")
        self._file.flush()
        reply = self._file.readline()
        if not reply:
            raise ConnectionError("device closed the connection")
        return reply.rstrip("\n")

    def close(self):
        try:
            self._file.close()
            self._sock.close()
        except OSError:
            pass


class HttpTransport:
    """Proxy through a collector's configure endpoint."""

    def __init__(self, url: str):
        self.url = url.rstrip("/")

    def send_line(self, line: str) -> str:
        import urllib.request
        body = json.dumps({"line": line}).encode("utf-8")
        request = urllib.request.Request(
            self.url + "/configure", data=body,
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(request) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except OSError as exc:
            raise ConnectionError(str(exc)) from exc
        return payload["reply"]

    def close(self):
        pass


def open_transport(device: str):
    if device.startswith(("unix:", "tcp:")):
        return SocketTransport(device)
    if device.startswith(("http://", "https://")):
        return HttpTransport(device)
    raise ValueError(
        "device must be unix:<path>, tcp:<host>:<port>, or an http URL")


class ConfiguratorClient:
    """Typed client over any transport."""

    def __init__(self, transport):
        self.transport = transport

    def _exchange(self, line: str) -> str:
        reply = self.transport.send_line(line)
        if reply.startswith("OK"):
            return reply[2:].lstrip()
        if reply.startswith("ERR "):
            code, _, detail = reply[4:].partition(" ")
            raise ProtocolError(code, detail)
        raise ProtocolError("BadReply", reply)

    def list(self) -> dict:
        return json.loads(self._exchange("LIST"))

    def get(self, slot: int, metric: int) -> dict:
        return json.loads(self._exchange("GET {} {}".format(slot, metric)))

    def set(self, slot: int, metric: int, **kwargs) -> str:
        args = []
        for key in ("poll", "threshold", "low", "high"):
            if key in kwargs and kwargs[key] is not None:
                args.append("{}={}".format(key, kwargs[key]))
        return self._exchange(
            "SET {} {} {}".format(slot, metric, " ".join(args)).rstrip())

    def save(self) -> str:
        return self._exchange("SAVE")

    def reboot(self) -> str:
        return self._exchange("REBOOT")

    def close(self):
        self.transport.close()


# -- Socket server (virtual device end) --------------------------------------


class _SessionHandler(socketserver.StreamRequestHandler):

    def handle(self):
        factory = self.server.session_factory
        try:
            session = factory().open()
        except (Busy, NoDevice) as exc:
            # answer every line so the client reads the error instead
            # of hitting a broken pipe on its first write
            error = "ERR {} {}\n".format(
                type(exc).__name__, exc).encode("ascii")
            for _raw in self.rfile:
                self.wfile.write(error)
            return
        try:
            for raw in self.rfile:
                line = raw.decode("ascii", "replace").strip()
                if not line:
                    continue
                reply = session.handle_line(line)
                self.wfile.write((reply + "\n").encode("ascii"))
                if session.closed:
                    break
        finally:
            session.close()


def serve_sessions(session_factory, address: str):
    """Serve configurator sessions on unix:<path> or tcp:<host>:<port>.

    Returns the server; call ``shutdown()`` to stop it.  One session is
    active at a time; extra connections get "ERR Busy".
    """
    if address.startswith("unix:"):
        server = socketserver.ThreadingUnixStreamServer(
            address[len("unix:"):], _SessionHandler)
    elif address.startswith("tcp:"):
        host, port = address[len("tcp:"):].rsplit(":", 1)
        server = socketserver.ThreadingTCPServer(
            (host, int(port)), _SessionHandler)
        server.allow_reuse_address = True
    else:
        raise ValueError("unsupported address %r" % (address,))
    server.session_factory = session_factory
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server._thread = thread
    return server


# -- CLI ---------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="iwast-cfg",
        description="Configure a (virtual) motherboard over its "
                    "USB session protocol.")
    parser.add_argument("--device", required=True,
                        help="unix:<path>, tcp:<host>:<port>, or the "
                             "http URL of a collector sim run")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("list", help="discover boards and metrics")
    p_get = sub.add_parser("get", help="read one metric's config")
    p_set = sub.add_parser("set", help="stage one metric's config")
    for p in (p_get, p_set):
        p.add_argument("--slot", type=int, required=True)
        p.add_argument("--metric", type=int, required=True)
    p_set.add_argument("--poll", type=int)
    p_set.add_argument("--threshold",
                       help="on, off, or a number in the metric's unit")
    p_set.add_argument("--low", type=int, help="scaled wire value")
    p_set.add_argument("--high", type=int, help="scaled wire value")
    sub.add_parser("save", help="persist staged config to NVM")
    sub.add_parser("reboot", help="reboot the device")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        transport = open_transport(args.device)
    except (ConnectionError, ValueError) as exc:
        print("transport error: {}".format(exc), file=sys.stderr)
        return 2
    client = ConfiguratorClient(transport)
    try:
        if args.verb == "list":
            print(json.dumps(client.list(), indent=2, sort_keys=True))
        elif args.verb == "get":
            print(json.dumps(client.get(args.slot, args.metric),
                             indent=2, sort_keys=True))
        elif args.verb == "set":
            client.set(args.slot, args.metric, poll=args.poll,
                       threshold=args.threshold, low=args.low,
                       high=args.high)
            print("OK")
        elif args.verb == "save":
            print("OK " + client.save())
        elif args.verb == "reboot":
            print("OK " + client.reboot())
        return 0
    except ProtocolError as exc:
        print("ERR {} {}".format(exc.code, exc.detail), file=sys.stderr)
        return 1
    except (ConnectionError, SessionClosed) as exc:
        print("transport error: {}".format(exc), file=sys.stderr)
        return 2
    finally:
        client.close()
