"""Pilot: end-to-end pipeline quality check at reduced benchmark scale."""
import time

import numpy as np

from vmsr.expert import generate_video_dataset
from vmsr.explore import (make_baseline_method, make_vmsr_method,
                          run_exploration_benchmark, subroutine_iou_analysis)
from vmsr.maze import MazeSpec, generate_maze
from vmsr.pipeline import (SubroutineTrainConfig, collect_interaction_data,
                           pseudo_label, slice_clips, train_inverse_model,
                           train_subroutines)
from vmsr.sim import AgentConfig

t0 = time.time()
CFG = AgentConfig()

einv = [generate_maze(1000 + i, MazeSpec(96, 96, 6, door_width=9), map_id=f"einv{i}") for i in range(4)]
evid = [generate_maze(2000 + i, MazeSpec(256, 256, 14, door_width=9), map_id=f"ev{i}") for i in range(4)]
etest = [generate_maze(4000 + i, MazeSpec(96, 96, 6, door_width=9), map_id=f"etest{i}") for i in range(2)]
print(f"maps {time.time()-t0:.0f}s")

data = collect_interaction_data(einv, 1500, 30, CFG, seed=0)
model, rep = train_inverse_model(data, CFG.ray_count, epochs=12, seed=0)
print(f"inverse acc={rep['val_accuracy']:.3f} {time.time()-t0:.0f}s")

videos = generate_video_dataset(evid, n_videos=2000, view_cfg=CFG, seed=0, jobs=2)
print(f"videos {time.time()-t0:.0f}s")

clips = []
for vi, clip in enumerate(videos.clips):
    labels = pseudo_label(model, clip)
    clips.extend(slice_clips(clip.observations, labels, 10, 5, source=vi))
print(f"{len(clips)} clips {time.time()-t0:.0f}s")
lab = np.concatenate([c.pseudo_actions for c in clips])
print("pseudo-label marginal:", np.bincount(lab, minlength=4) / len(lab))

enc, pol, aff, srep = train_subroutines(clips, CFG.ray_count,
                                        SubroutineTrainConfig(epochs=30, seed=0))
print(f"subroutines {time.time()-t0:.0f}s z_usage={srep['z_usage']}")
print("final policy loss:", srep["policy_loss_curve"][-3:])

methods = {
    "vmsr": make_vmsr_method(aff, pol, CFG, 408),
    "random": make_baseline_method("random", CFG, 408),
    "forward_bias": make_baseline_method("forward_bias", CFG, 408),
    "forward_rotate_on_collision": make_baseline_method("forward_rotate_on_collision", CFG, 408),
}
reports = run_exploration_benchmark(methods, etest, CFG, n_starts=20,
                                    runs_per_start=2, episode_length=408, seed=0)
for name, r in reports.items():
    print(f"{name:30s} ADT={r.adt:6.2f}  MaxDist={r.max_distance:6.2f}  Coll={r.collision_rate:6.3f}")
print(f"benchmark {time.time()-t0:.0f}s")

iou = subroutine_iou_analysis(aff, pol, etest, CFG, n_starts=4, rollouts=4, windows=3, seed=0)
print(f"IoU same={iou['same_mean']:.3f} cross={iou['cross_mean']:.3f} {time.time()-t0:.0f}s")
