"""Text and structured rendering of command results on stdout."""
import json
import math
import sys
from typing import Any, Dict, Optional, TextIO

from jinja2 import DictLoader, Environment, StrictUndefined

TEMPLATES = {
    "explain": """\
Decision Sapling of {{ node_a }} with respect to {{ node_b }} ({{ layer }} layer, N = {{ n_total }})
  bean        {{ bean_pos }} / {{ n_total }} linked to {{ node_a }}  ({{ fractions.bean | pct }})
  right leaf  {{ right_pos }} / {{ right_pos + right_neg }} among the nodes linked to {{ node_b }}  ({{ fractions.right_leaf | pct }})
  left leaf   {{ left_pos }} / {{ left_pos + left_neg }} among the nodes not linked to {{ node_b }}  ({{ fractions.left_leaf | pct }})
{% if delta_gini is none %}
  delta GI    undefined (a degree is 0 or N)
{% else %}
  delta GI    {{ delta_gini | num }}
{% endif %}
  sign rule   N*CO - k_a*k_b = {{ n_total }}*{{ right_pos }} - {{ bean_pos }}*{{ right_pos + right_neg }} = {{ excess }}  ->  {{ sign }}
  sapling     {{ value | signed }}{% if annotation %}  ({{ annotation }}){% endif %}

""",
    "report": """\
{{ dataset }}  {{ metric }}  mode={{ mode }}{% if gamma is not none %}  gamma={{ gamma }}{% endif %}  task={{ task }}
{% for name, value in aggregates.items() %}
  {{ "%-14s" | format(name) }} {{ value | num }}
{% endfor %}
  users         {{ n_evaluated }} evaluated, {{ n_skipped }} skipped
{% if gamma_curve %}
  gamma curve
{% for point in gamma_curve %}
    {{ "%4.2f" | format(point.gamma) }}  {{ point.ndcg | num }}
{% endfor %}
{% endif %}
{% for note in notes %}
  note: {{ note }}
{% endfor %}
  written to    {{ path }}
""",
    "tune": """\
best gamma {{ best_gamma }} (validation ndcg@{{ k }} = {{ best_ndcg | num }}, {{ n_evaluated }} users, {{ n_skipped }} skipped)
{% for point in points %}
  {{ "%4.2f" | format(point.gamma) }}  {{ point.ndcg | num }}
{% endfor %}
curve written to {{ path }}
""",
    "similarity": """\
{{ metric }} similarity on {{ n }} {{ layer }}: {{ nnz }} stored entries{% if truncation %} (top {{ truncation }} per row){% endif %}

written to {{ path }}
""",
    "project": """\
{{ metric }} projection of {{ nodes }} {{ layer }} (k = {{ k }}): {{ edges }} edges
written to {{ path }}
""",
    "split": """\
train {{ train_edges }} edges -> {{ train_path }}
test  {{ test_edges }} edges -> {{ test_path }}
(fraction {{ fraction }}, seed {{ seed }})
""",
    "ingest": """\
{{ n_users }} users x {{ n_items }} items, {{ n_edges }} edges -> {{ path }}
{% for path in label_files %}
labels -> {{ path }}
{% endfor %}
""",
}


def _num(value: Any) -> str:
    return f"{value:.6f}" if isinstance(value, float) else str(value)


def _signed(value: float) -> str:
    return f"{value:+.6f}"


def _pct(value: float) -> str:
    return "n/a" if math.isnan(value) else f"{100.0 * value:.1f}%"


environment = Environment(
    loader=DictLoader(TEMPLATES),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)
environment.filters.update(num=_num, signed=_signed, pct=_pct)


def render_text(template: str, result: Dict[str, Any]) -> str:
    return environment.get_template(template).render(**result)


def render_structured(result: Dict[str, Any]) -> str:
    return json.dumps(result, indent=2, ensure_ascii=False, default=str) + "\n"


def emit(template: str, result: Dict[str, Any], fmt: str = "text", stream: Optional[TextIO] = None):
    """Write a command result to stdout as text or JSON."""
    stream = stream or sys.stdout
    if fmt == "structured":
        stream.write(render_structured(result))
    else:
        stream.write(render_text(template, result))
    stream.flush()
