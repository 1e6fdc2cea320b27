"""Write the decay-profile battery as two-column CSV files next to this script."""
from pathlib import Path

from torusma.experiments import decay_battery

here = Path(__file__).parent
for name, (profile, alpha) in decay_battery().items():
    profile.to_csv(here / f"{name}.csv")
    print(f"{name}.csv  alpha={alpha:g}  samples={profile.s.size}")
