"""Static text and HTML rendering of timelines. Not an interactive UI;
output is meant for terminals, logs, and embedding in other pages.
"""

from __future__ import annotations

import html
from datetime import datetime, timezone
from typing import Sequence

from .core import Timeline
from .heat import HeatLevel


def _date(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")


def render_text(timeline: Timeline,
                heat: Sequence[HeatLevel] | None = None) -> str:
    """Aligned columns: date, marker for the query event, summary, heat."""
    if heat is not None and len(heat) != len(timeline.events):
        raise ValueError("heat labels must match event count")
    lines = []
    for i, event in enumerate(timeline.events):
        marker = ">>" if event.id == timeline.query_event_id else "  "
        row = f"{_date(event.timestamp)}  {marker} {event.summary}"
        if heat is not None:
            row += f"  [H{int(heat[i])}]"
        lines.append(row)
    return "\n".join(lines)


def render_html(timeline: Timeline,
                heat: Sequence[HeatLevel] | None = None) -> str:
    if heat is not None and len(heat) != len(timeline.events):
        raise ValueError("heat labels must match event count")
    items = []
    for i, event in enumerate(timeline.events):
        classes = ["event"]
        if event.id == timeline.query_event_id:
            classes.append("query")
        if heat is not None:
            classes.append(f"heat-{int(heat[i])}")
        items.append(
            f'  <li class="{" ".join(classes)}">'
            f'<time>{_date(event.timestamp)}</time> '
            f"{html.escape(event.summary)}</li>"
        )
    body = "\n".join(items)
    return (
        "<!doctype html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>Timeline {html.escape(timeline.query_event_id)}</title></head>\n"
        f"<body>\n<ol class=\"timeline\">\n{body}\n</ol>\n</body></html>\n"
    )
