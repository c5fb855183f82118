"""
Fixed-step integrator for the node model. It drives a NodeRuntime with
constant 1 ms steps instead of jumping between completion events.
"""
from pullsim.sim.runtime import NodeRuntime

STEP = 1e-3


def run_fixed_step(node: NodeRuntime, dt: float = STEP, limit: float = 3_600.0) -> float:
    """Advance ``node`` in steps of ``dt`` until it goes idle; returns the clock."""
    sim = node.sim
    start = sim.clock
    steps = 0
    while node.busy:
        steps += 1
        if steps * dt > limit:
            raise RuntimeError(f"node still busy after {limit}s of fixed steps")
        node.advance(dt)
        sim.clock = start + steps * dt
        node.settle()
    return sim.clock
