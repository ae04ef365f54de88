"""
The controller variants side by side
====================================

Every mode trains the same student from the same seed for a short run.
SHARED uses one alpha on both loss paths, KL_ONLY and CE_ONLY restrict it
to one path, FULL learns an alpha per path, TEACHER scales the teacher
instead, LEARN_T learns the KL temperature, COMPENSATED divides the loss
by alpha^2, and STATIC follows a fixed 0.5 / 1.0 / 2.0 schedule.
"""
from dynkd import DistillConfig, Mode, distill, evaluate, synth_blobs, train_teacher

train = synth_blobs(0, 10, 200, 32, 0.6)
test = synth_blobs(1, 10, 50, 32, 0.6)
teacher, _ = train_teacher(DistillConfig(mode="none", epochs=12, lr_drop_epochs=(8,)), [32, 128, 64, 10], train, test)

print(f"{'mode':12s} {'test acc':>8s}  controller after training      folded into student?")
for mode in Mode:
    cfg = DistillConfig(mode=mode, epochs=12, lr_drop_epochs=(8, 10), seed=1)
    res = distill(cfg, teacher, [32, 16, 10], train, test)
    state = {k: round(v, 4) for k, v in res.controller.values().items()} or "-"
    folded = "yes" if res.reparam is not None else ("n/a" if res.reparam_error is None else "no")
    print(f"{mode.value:12s} {evaluate(res.student, test):8.3f}  {str(state):30s} {folded}")
    if res.reparam_error:
        print(f"{'':12s} {res.reparam_error}")
