import logging
import time
from contextlib import contextmanager

from opentelemetry import trace
from opentelemetry.sdk import trace as trace_sdk
from opentelemetry.sdk.trace.export import SimpleSpanProcessor
from opentelemetry.trace import Status, StatusCode

from .exporters.file_span_exporter import FileSpanExporter

logger = logging.getLogger(__name__)


class StageTracer:
    """
    Wraps pipeline stages in OpenTelemetry spans written to a JSONL trace file.

    Without a trace path every stage gets a non-recording span, so callers can set
    attributes unconditionally.

    Usage:
        tracer = StageTracer("out/trace.jsonl", metadata={"seed": 7})
        with tracer.stage("mine") as span:
            span.set_attribute("chains", 2)
        tracer.shutdown()
    """

    def __init__(self, trace_path=None, metadata=None):
        self.trace_path = trace_path
        self._provider = None
        self._tracer = None
        if trace_path:
            self._provider = self._setup_provider(trace_path, metadata)
            self._tracer = self._provider.get_tracer("search_accelerator")

    @staticmethod
    def _setup_provider(trace_path, metadata):
        exporter = FileSpanExporter(trace_path, metadata=metadata)
        tracer_provider = trace_sdk.TracerProvider()
        tracer_provider.add_span_processor(SimpleSpanProcessor(exporter))
        return tracer_provider

    @property
    def enabled(self):
        return self._tracer is not None

    @contextmanager
    def stage(self, name, **attributes):
        started = time.perf_counter()
        if self._tracer is None:
            yield trace.INVALID_SPAN
            logger.debug(f"Stage {name} took {time.perf_counter() - started:.3f}s")
            return
        with self._tracer.start_as_current_span(
            f"stage.{name}", record_exception=False, set_status_on_exception=False
        ) as span:
            span.set_attribute("stage", name)
            for key, value in attributes.items():
                span.set_attribute(key, value)
            try:
                yield span
            except Exception as e:
                span.record_exception(e)
                span.set_status(Status(StatusCode.ERROR, str(e)))
                raise
            span.set_attribute("duration_s", round(time.perf_counter() - started, 6))

    def shutdown(self):
        if self._provider is not None:
            self._provider.shutdown()
