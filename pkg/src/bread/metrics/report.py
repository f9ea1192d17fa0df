"""Per-image metric tables with CSV and JSON output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class MetricReport:
    per_image: dict[str, dict[str, float]] = field(default_factory=dict)
    variants: dict[str, bool] = field(default_factory=lambda: {"plain": True, "gamma_aligned": False})
    errors: dict[str, str] = field(default_factory=dict)

    def add(self, image_id: str, scores: dict[str, float]) -> None:
        self.per_image.setdefault(image_id, {}).update(scores)

    @property
    def metric_names(self) -> list[str]:
        names: list[str] = []
        for scores in self.per_image.values():
            names += [k for k in scores if k not in names]
        return names

    @property
    def aggregate(self) -> dict[str, float]:
        """Arithmetic mean of each metric over the images that report it."""
        out = {}
        for name in self.metric_names:
            vals = [s[name] for s in self.per_image.values() if name in s]
            out[name] = math.fsum(vals) / len(vals)
        return out

    def write_csv(self, path: str | Path) -> None:
        names = self.metric_names
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image", *names])
            for image_id, scores in self.per_image.items():
                writer.writerow([image_id, *(repr(scores[n]) if n in scores else "" for n in names)])

    def to_json(self) -> dict:
        return {
            "aggregate": self.aggregate,
            "count": len(self.per_image),
            "per_image": self.per_image,
            "variants": self.variants,
            "errors": self.errors,
        }

    def write(self, out_dir: str | Path, stem: str = "metrics") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
        self.write_csv(csv_path)
        json_path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True), encoding="utf-8")
        return csv_path, json_path
