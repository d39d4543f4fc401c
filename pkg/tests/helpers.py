"""Small hand-built simulated compilers for targeted cases."""
from grace.backend import SimulatedBackend


def tiny_backend(passes, counters=("x", "y"), flags=("f", "g"), oz=None, floor=0, max_len=60):
    spec = {"name": "tiny", "counters": list(counters), "flags": list(flags), "floor": floor,
            "passes": passes, "oz": list(oz or [])}
    return SimulatedBackend(spec, max_len=max_len)


def prog(backend, pid, flags=(), **counters):
    full = {c: counters.get(c, 0) for c in backend.model.counters}
    return backend.program(pid, {"counters": full, "flags": list(flags)})


def pair_spec():
    """pA sets f; pB (once only) removes 50% of x, and another 50% when f is set. junk does nothing."""
    return {
        "pA": [{"set": ["f"]}],
        "pB": [{"forbid": ["g"], "effect": {"x": 50}, "set": ["g"]},
               {"require": ["f"], "forbid": ["g"], "effect": {"x": 50}}],
        "junk": [],
    }
