from .tracer import StageTracer


__all__ = ["StageTracer"]
