"""Stand-in for the debugger shim: speaks the framed stdio protocol with
canned but stateful answers. Usage: stub_shim.py [--mode MODE] TEST_NAME

Modes: normal, bad-id (first reply carries a wrong id), silent (no
greeting), crash (exits after the greeting).
"""
import json
import sys


def send(frame):
    sys.stdout.write(json.dumps(frame) + "\n")
    sys.stdout.flush()


class Session:
    def __init__(self, test_name):
        path, _, func = test_name.partition("::")
        self.file = path
        self.func = func
        self.start = self.find_start()
        self.line = self.start
        self.breakpoints = []
        self.finished = False

    def find_start(self):
        try:
            with open(self.file) as fh:
                lines = fh.read().splitlines()
        except OSError:
            return 1
        for i, text in enumerate(lines):
            if text.startswith("def " + self.func + "("):
                return i + 2
        return 1

    def state(self):
        if self.finished:
            return {"kind": "finished"}
        return {"kind": "paused", "file": self.file, "line": self.line}

    def listing(self, lo, hi):
        try:
            with open(self.file) as fh:
                lines = fh.read().splitlines()
        except OSError:
            return "*** cannot read " + self.file
        out = []
        for n in range(max(lo, 1), min(hi, len(lines)) + 1):
            mark = "->" if n == self.line else "  "
            out.append("{:>4} {} {}".format(n, mark, lines[n - 1]))
        return "\n".join(out)

    def handle(self, verb, arg):
        if verb in ("s", "n"):
            self.line += 1
            return "> {}({})".format(self.file, self.line)
        if verb == "r":
            self.line += 1
            return "--Return--"
        if verb == "b":
            if not arg:
                return "\n".join(self.breakpoints) or "No breakpoints."
            self.breakpoints.append(arg)
            return "Breakpoint {} at {}".format(len(self.breakpoints), arg)
        if verb == "c":
            for bp in self.breakpoints:
                where, _, line = bp.rpartition(":")
                if line.isdigit() and int(line) > self.line:
                    self.file = where or self.file
                    self.line = int(line)
                    return "> {}({})".format(self.file, self.line)
            self.finished = True
            return "The test finished."
        if verb in ("p", "pp"):
            try:
                return repr(eval(arg, {"__builtins__": {}}, {}))
            except Exception as exc:
                return "*** {}: {}".format(type(exc).__name__, exc)
        if verb == "whatis":
            try:
                return str(type(eval(arg, {"__builtins__": {}}, {})))
            except Exception as exc:
                return "*** {}: {}".format(type(exc).__name__, exc)
        if verb in ("args", "locals()", "globals()"):
            return "{}"
        if verb == "l":
            return self.listing(self.line - 5, self.line + 5)
        if verb == "l .":
            return self.listing(self.line - 5, self.line + 5)
        if verb == "ll":
            return self.listing(self.start - 1, self.start + 1)
        if verb in ("w", "where"):
            return "> {}({}){}()".format(self.file, self.line, self.func)
        if verb == "restart":
            self.line = self.start
            self.finished = False
            return "Restarting " + self.file
        return None


def main(argv):
    mode = "normal"
    if len(argv) > 2 and argv[1] == "--mode":
        mode = argv[2]
        argv = [argv[0]] + argv[3:]
    if len(argv) != 2:
        sys.stderr.write("usage: stub_shim.py [--mode MODE] TEST_NAME\n")
        return 2
    session = Session(argv[1])
    if mode == "silent":
        sys.stdin.read()
        return 0
    send({"id": 0, "output": "stub shim ready", "state": session.state()})
    if mode == "crash":
        return 3
    first = True
    for raw in sys.stdin:
        raw = raw.strip()
        if not raw:
            continue
        try:
            req = json.loads(raw)
            rid, verb, arg = req["id"], req["verb"], req.get("arg") or ""
        except (ValueError, KeyError):
            send({"id": -1, "output": "malformed frame", "state": {"kind": "error"}})
            continue
        if mode == "bad-id" and first:
            rid += 1
        first = False
        output = session.handle(verb, arg)
        if output is None:
            send({"id": rid, "output": "*** unknown verb " + verb, "state": {"kind": "error"}})
        else:
            send({"id": rid, "output": output, "state": session.state()})
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
