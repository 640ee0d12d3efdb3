from typing import Any

from robotlibcore import DynamicCore, keyword

__all__ = ['ClusteringCore', 'keyword']


class ClusteringCore(DynamicCore):
    """DynamicCore that reports the source of ``@assertable`` keywords rather than their wrapper."""

    def get_keyword_source(self, keyword_name: str) -> str | None:
        method: Any = self.keywords.get(keyword_name)
        source = getattr(method, 'robot_source', None)
        lineno = getattr(method, 'robot_lineno', None)
        if isinstance(source, str):
            return f'{source}:{lineno}' if isinstance(lineno, int) else source
        found = super().get_keyword_source(keyword_name)
        return None if found is None else str(found)
