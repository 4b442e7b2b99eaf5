"""Test adapter for the hexparse fixture.

Reads one JSON request on stdin and writes one JSON response on stdout
(capture mode streams one JSON line per invocation of the buggy function).
"""
import _json
import _signal
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
BUGGY_NAME = "createNumber"
PATCH_FILE = "createNumber.py"
PROJECT_FILE = "NumberUtils.py"

TESTS = [
    ("t_fail_upperhex", "-0Xfade", -64222),
    ("t_pass_hex", "0xfade", 64222),
    ("t_pass_neghex", "-0xfade", -64222),
]


class _DecodeContext:
    strict = True
    object_hook = None
    object_pairs_hook = None
    parse_float = float
    parse_int = int
    parse_constant = float
    memo = {}


# The json package imports re, which doubles interpreter startup.
_scan = _json.make_scanner(_DecodeContext())
_encode = _json.make_encoder(None, None, _json.encode_basestring_ascii, None, ": ", ", ", False, False, True)


def json_loads(text):
    text = text.strip()
    value, end = _scan(text, 0)
    if end != len(text):
        raise ValueError("trailing data in request")
    return value


def json_dumps(value):
    return "".join(_encode(value, 0))


class TestTimeout(Exception):
    pass


def _alarm(signum, frame):
    raise TestTimeout()


def load(patch):
    namespace = {"__name__": "hexparse"}
    with open(os.path.join(HERE, "number_utils.py")) as fh:
        exec(compile(fh.read(), PROJECT_FILE, "exec"), namespace)
    exec(compile(patch, PATCH_FILE, "exec"), namespace)
    if BUGGY_NAME not in namespace:
        raise NameError("patch does not define " + BUGGY_NAME)
    return namespace


def frames_of(exc):
    frames = []
    tb = exc.__traceback__
    while tb is not None:
        code = tb.tb_frame.f_code
        if code.co_filename in (PATCH_FILE, PROJECT_FILE):
            frames.append({"function": code.co_name, "file": code.co_filename, "line": tb.tb_lineno})
        tb = tb.tb_next
    return frames


def render(exc, frames):
    lines = ["Traceback (most recent call last):"]
    for fr in frames:
        lines.append('  File "%s", line %d, in %s' % (fr["file"], fr["line"], fr["function"]))
    lines.append("%s: %s" % (type(exc).__name__, exc))
    return "\n".join(lines)


def failure(exc):
    frames = frames_of(exc)
    return {"verdict": "fail", "traceback": render(exc, frames), "frames": frames}


def decode(node):
    tag, value = node["t"], node["v"]
    if tag in ("bool", "int", "str", "char"):
        return value
    if tag == "float":
        return float(value)
    if tag == "null":
        return None
    if tag == "arr":
        return [decode(v) for v in value]
    if tag == "obj":
        return {k: decode(v) for k, v in value}
    raise ValueError("unknown tag " + tag)


def encode(value):
    if isinstance(value, bool):
        return {"t": "bool", "v": value}
    if isinstance(value, int):
        return {"t": "int", "v": value}
    if isinstance(value, float):
        return {"t": "float", "v": value}
    if isinstance(value, str):
        return {"t": "str", "v": value}
    if value is None:
        return {"t": "null", "v": None}
    raise ValueError("unsupported value")


def run_test(namespace, test_id):
    for tid, arg, expected in TESTS:
        if tid == test_id:
            actual = namespace[BUGGY_NAME](arg)
            if actual != expected:
                raise AssertionError(
                    "%s(%r) returned %r, expected %r" % (BUGGY_NAME, arg, actual, expected)
                )
            return
    raise KeyError("unknown test " + str(test_id))


def main():
    request = json_loads(sys.stdin.read())
    _signal.signal(_signal.SIGALRM, _alarm)
    _signal.alarm(max(1, int(request.get("timeout_secs") or 30)))
    mode = request["mode"]
    try:
        if mode == "capture":
            namespace = load(request["patch"])
            original = namespace[BUGGY_NAME]
            for tid, _, _ in TESTS:
                calls = []

                def recorder(*args):
                    calls.append(args)
                    return original(*args)

                namespace[BUGGY_NAME] = recorder
                try:
                    run_test(namespace, tid)
                    verdict = "pass"
                except Exception:
                    verdict = "fail"
                for args in calls:
                    params = [["str", encode(args[0])]]
                    line = {"invocation": {"t": "obj", "v": params}, "test_id": tid, "verdict": verdict}
                    sys.stdout.write(json_dumps(line) + "\n")
            return
        try:
            namespace = load(request["patch"])
            if mode == "suite":
                run_test(namespace, request["test_id"])
            elif mode == "args":
                params = decode(request["args"])
                namespace[BUGGY_NAME](*params.values())
            else:
                raise ValueError("unknown mode " + mode)
            response = {"verdict": "pass", "traceback": None, "frames": None}
        except TestTimeout:
            response = {"verdict": "timeout", "traceback": None, "frames": None}
        except Exception as exc:
            response = failure(exc)
        sys.stdout.write(json_dumps(response))
    finally:
        _signal.alarm(0)


if __name__ == "__main__":
    main()
