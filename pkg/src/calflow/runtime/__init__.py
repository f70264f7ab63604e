from calflow.runtime.channel import RingChannel
from calflow.runtime.reference import ReferenceResult, run_reference
from calflow.runtime.scheduler import RunOptions, RunResult, run_network

__all__ = ["RingChannel", "ReferenceResult", "RunOptions", "RunResult", "run_network", "run_reference"]
