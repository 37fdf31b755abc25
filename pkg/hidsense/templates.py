# Copyright 2025 The hidsense Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from jinja2 import Environment, StrictUndefined

_env = Environment(
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=StrictUndefined,
)

descriptor_dump = _env.from_string(
    """== {{ title }} ({{ length }} bytes) ==
{% for row in rows %}
{{ "%04X" | format(row.offset) }}  {{ "%-12s" | format(row.hex) }}  {{ "%-20s" | format(row.name) }} {{ row.value }}
{% endfor %}
"""
)

trace_summary = _env.from_string(
    """packets: {{ counts.values() | sum }}
{% for kind, n in counts.items() if n %}
  {{ "%-8s" | format(kind) }} {{ n }}
{% endfor %}
reports: {{ s.reports }}
{% if s.cadence_mean_ms is not none %}
cadence: mean {{ "%.1f" | format(s.cadence_mean_ms) }} ms, min {{ "%.1f" | format(s.cadence_min_ms) }} ms, max {{ "%.1f" | format(s.cadence_max_ms) }} ms
{% endif %}
{% if s.service_rate_hz is not none %}
keep-alive: {{ "%.1f" | format(s.service_rate_hz) }} services/s{% if s.max_service_gap_us is not none %}, longest gap {{ s.max_service_gap_us }} us{% endif %}

{% endif %}
{% if s.nak_ratio is not none %}
nak ratio: {{ "%.3f" | format(s.nak_ratio) }} of {{ s.polls }} polls
{% endif %}
{% if s.overwritten_reports %}
overwritten reports: {{ s.overwritten_reports }}
{% endif %}
{% if s.trip_time_us is not none %}
watchdog tripped at T={{ s.trip_time_us }}; nak ratio after trip {{ "%.3f" | format(s.nak_ratio_after_trip) }}
{% endif %}
"""
)
