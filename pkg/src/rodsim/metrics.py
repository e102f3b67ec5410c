"""Per-epoch metrics collection and CSV export."""

import csv

HEADER = [
    "epoch", "time_s", "wall_ns", "steps", "barrier_wait_ns", "contacts",
    "max_strain", "energy_stretch", "energy_bend", "energy_penalty",
]


class MetricsTable:
    """Append-only per-epoch rows with a fixed header."""

    def __init__(self):
        self.rows = []

    def append(self, **fields):
        unknown = set(fields) - set(HEADER)
        if unknown:
            raise KeyError(f"unknown metric columns: {sorted(unknown)}")
        self.rows.append([fields.get(col, "") for col in HEADER])

    def column(self, name):
        i = HEADER.index(name)
        return [row[i] for row in self.rows]

    def export(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HEADER)
            writer.writerows(self.rows)
        return path
