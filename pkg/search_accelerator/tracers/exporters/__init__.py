from .file_span_exporter import FileSpanExporter


__all__ = ["FileSpanExporter"]
