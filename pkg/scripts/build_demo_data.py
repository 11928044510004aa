"""Regenerate the shipped demo model and sample CSV under src/cbi/data/."""

from pathlib import Path

from cbi.anfis import serialize_model
from cbi.demo import demo_samples, train_demo_model
from cbi.samples import save_samples

DATA = Path(__file__).resolve().parents[1] / "src" / "cbi" / "data"

if __name__ == "__main__":
    samples, _, _ = demo_samples()
    (DATA / "demo_samples.csv").write_text(save_samples(samples))
    (DATA / "demo_model.json").write_text(serialize_model(train_demo_model()))
    print(f"wrote {DATA / 'demo_samples.csv'} ({len(samples)} rows) and {DATA / 'demo_model.json'}")
