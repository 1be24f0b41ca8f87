"""Write every built-in scenario as an editable config file.

    python3 scripts/export_configs.py [outdir]      (default: configs/)
"""
import sys
from pathlib import Path

from helmlab.scenarios import BUILTIN

out = Path(sys.argv[1] if len(sys.argv) > 1 else "configs")
out.mkdir(parents=True, exist_ok=True)
for name, text in sorted(BUILTIN.items()):
    (out / f"{name}.cfg").write_text(text)
    print(out / f"{name}.cfg")
