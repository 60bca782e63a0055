import json
import logging
import os
import threading

from opentelemetry.sdk.trace.export import SpanExporter, SpanExportResult

from ...utils import get_unique_key

logger = logging.getLogger(__name__)


class FileSpanExporter(SpanExporter):
    def __init__(self, file_path, metadata=None):
        """
        Initializes the FileSpanExporter.

        Args:
            file_path (str): JSONL file that finished spans are appended to.
            metadata (dict, optional): Run metadata written with every span. Defaults to None.
        """
        self.file_path = file_path
        self.metadata = dict(metadata or {})
        self.metadata["id"] = get_unique_key(self.metadata)
        self._lock = threading.Lock()
        self._closed = False
        parent = os.path.dirname(os.path.abspath(file_path))
        os.makedirs(parent, exist_ok=True)

    def export(self, spans):
        """
        Append spans to the trace file, one JSON object per line.

        Args:
            spans (list): Finished spans.

        Returns:
            SpanExportResult: SUCCESS, or FAILURE when the file cannot be written.
        """
        if self._closed:
            return SpanExportResult.FAILURE
        lines = []
        for span in spans:
            record = json.loads(span.to_json())
            lines.append(json.dumps({"metadata": self.metadata, "span": record}, ensure_ascii=False))
        try:
            with self._lock, open(self.file_path, "a", encoding="utf-8") as f:
                logger.debug(f"Writing {len(lines)} spans to {self.file_path}")
                for line in lines:
                    f.write(line + "\n")
        except OSError as e:
            logger.error(f"Could not write spans to {self.file_path}: {e}")
            return SpanExportResult.FAILURE
        return SpanExportResult.SUCCESS

    def shutdown(self):
        self._closed = True
