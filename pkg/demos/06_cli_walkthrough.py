"""
The command-line tool end to end
================================

Writes a config, trains a teacher, distills a student with landscape
snapshots at the first and last epoch, evaluates both student checkpoints
and scans a saved pair. Equivalent shell commands are printed alongside.
"""
from pathlib import Path

from dynkd.cli import main

work = Path("demo_out/cli")
work.mkdir(parents=True, exist_ok=True)
cfg = work / "run.cfg"
cfg.write_text(f"""\
# desk-scale run, shortened
dataset = blobs:10,200,32,0.6
mode = shared
epochs = 12
lr_drops = 8,10
scan_epochs = 0,final
out_dir = {work}
""")

data = "blobs:10,200,32,0.6"
steps = [
    ["train-teacher", str(cfg)],
    ["distill", str(cfg)],
    ["eval", str(work / "student_raw.dkd"), data],
    ["eval", str(work / "student_reparam.dkd"), data],
    ["scan-alpha", str(work / "teacher.dkd"), str(work / "student_raw.dkd"), data, "4", str(work / "scan.csv")],
]
for argv in steps:
    print("$ dynkd", " ".join(argv))
    code = main(argv)
    print(f"  (exit {code})")

print("\nfiles:", sorted(p.name for p in work.iterdir()))
