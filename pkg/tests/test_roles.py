"""Role-rule tests: goal selection signs, alpha constants, and the
estimation formula."""

import numpy as np
import pytest

from voxact.errors import ConfigError
from voxact.roles import (
    DRAWER_TASKS,
    HAND_OVER_ITEM,
    OPEN_DRAWER,
    OPEN_JAR,
    PUT_ITEM_IN_DRAWER,
    TASKS,
    ObjectPose,
    alpha_for_task,
    assign_goal,
    estimate_alpha,
    validate_alpha,
)
from voxact.voxel import GridSpec

BASE = GridSpec(origin=np.zeros(3), span=np.full(3, 2.0), dims=(50, 50, 50))


def _obj(y=0.0, yaw=0.0, extent=(0.2, 0.2, 0.2)):
    return ObjectPose(position=np.array([0.0, y, 1.0]), yaw_deg=yaw,
                      extent=np.array(extent), label="thing")


class TestAssignGoal:
    def test_drawer_facing_left(self):
        assert assign_goal(_obj(yaw=15.0), OPEN_DRAWER).tag == "as"

    def test_drawer_facing_right(self):
        assert assign_goal(_obj(yaw=-15.0), OPEN_DRAWER).tag == "sa"

    def test_jar_closer_to_left(self):
        assert assign_goal(_obj(y=0.2), OPEN_JAR).tag == "as"

    def test_jar_closer_to_right(self):
        assert assign_goal(_obj(y=-0.2), OPEN_JAR).tag == "sa"

    def test_handover_uses_position_rule(self):
        assert assign_goal(_obj(y=0.1), HAND_OVER_ITEM).tag == "as"
        assert assign_goal(_obj(y=-0.1), HAND_OVER_ITEM).tag == "sa"

    def test_put_item_uses_yaw_rule(self):
        assert assign_goal(_obj(yaw=5.0), PUT_ITEM_IN_DRAWER).tag == "as"

    def test_tie_goes_to_sa(self):
        assert assign_goal(_obj(yaw=0.0), OPEN_DRAWER).tag == "sa"
        assert assign_goal(_obj(y=0.0), OPEN_JAR).tag == "sa"

    def test_mirror_involution(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            task = TASKS[int(rng.integers(len(TASKS)))]
            y = float(rng.uniform(-0.4, 0.4)) or 1e-6
            yaw = float(rng.uniform(-179, 179)) or 1e-6
            obj = _obj(y=y, yaw=yaw)
            mirrored = _obj(y=-y, yaw=-yaw)
            tags = {assign_goal(obj, task).tag, assign_goal(mirrored, task).tag}
            if (task in DRAWER_TASKS and yaw != 0) or (task not in DRAWER_TASKS and y != 0):
                assert tags == {"as", "sa"}

    def test_unknown_task(self):
        with pytest.raises(ConfigError):
            assign_goal(_obj(), "stack_cups")

    def test_goal_text_nonempty(self):
        for task in TASKS:
            assert assign_goal(_obj(y=0.1, yaw=5.0), task).text


class TestAlpha:
    def test_fixed_values(self):
        assert alpha_for_task(OPEN_JAR) == 0.3
        assert alpha_for_task(OPEN_DRAWER) == 0.4
        assert alpha_for_task(PUT_ITEM_IN_DRAWER) == 0.4
        assert alpha_for_task(HAND_OVER_ITEM) == 0.4

    def test_unknown_task(self):
        with pytest.raises(ConfigError):
            alpha_for_task("sort_blocks")

    def test_estimate_formula(self):
        # (0.55 + 2*0.05) / 2 = 0.325
        obj = _obj(extent=(0.55, 0.2, 0.3))
        assert estimate_alpha(obj, 2.0, padding=0.05) == pytest.approx(0.325)

    def test_estimate_clamps_high(self):
        obj = _obj(extent=(2.5, 0.2, 0.2))
        assert estimate_alpha(obj, 2.0) == 1.0

    def test_estimate_clamps_low(self):
        obj = _obj(extent=(1e-6, 1e-6, 1e-6))
        assert estimate_alpha(obj, 2.0, padding=0.0) == 0.05

    def test_estimate_monotone(self):
        rng = np.random.default_rng(1)
        prev = 0.0
        for size in np.linspace(0.01, 2.5, 40):
            alpha = estimate_alpha(_obj(extent=(size, 0.01, 0.01)), 2.0)
            assert alpha >= prev
            prev = alpha

    def test_validate_containment(self):
        # alpha * span = 0.6: a 0.5 object fits, a 0.7 object does not
        assert validate_alpha(_obj(extent=(0.5, 0.5, 0.5)), 0.3, BASE)
        assert not validate_alpha(_obj(extent=(0.7, 0.5, 0.5)), 0.3, BASE)

    def test_validate_full_workspace(self):
        assert validate_alpha(_obj(extent=(1.5, 1.5, 1.5)), 1.0, BASE)

    def test_fixed_alphas_contain_task_objects(self):
        # largest-scale toy objects must fit their task's crop
        drawer = _obj(extent=(0.4, 0.3, 0.3))
        jar = _obj(extent=(0.08, 0.08, 0.14))
        assert validate_alpha(drawer, alpha_for_task(OPEN_DRAWER), BASE)
        assert validate_alpha(jar, alpha_for_task(OPEN_JAR), BASE)


def test_task_alphas_contain_largest_toy_objects():
    # the per-task crop must contain each toy object at its largest scale,
    # which is the containment rule the fixed alphas were chosen by
    import numpy as np
    from voxact.toyworld import ToyScene, drawer_dims, jar_dims, ITEM_SIZE, GripperState
    from voxact.geometry import Pose6D, euler_to_quat
    from voxact.toyworld import BASE_SPEC

    grippers = [GripperState(pose=Pose6D(np.zeros(3), euler_to_quat([0, 0, 0])))
                for _ in range(2)]
    drawer = ToyScene(task=OPEN_DRAWER, object_position=np.zeros(3),
                      object_yaw_deg=0.0, scale=1.0, grippers=grippers)
    dd = drawer_dims(drawer)
    drawer_obj = _obj(extent=(dd["depth"], dd["width"], dd["height"]))
    assert validate_alpha(drawer_obj, alpha_for_task(OPEN_DRAWER), BASE_SPEC)

    jar = ToyScene(task=OPEN_JAR, object_position=np.zeros(3),
                   object_yaw_deg=0.0, scale=1.0, grippers=grippers)
    jd = jar_dims(jar)
    jar_obj = _obj(extent=(2 * jd["body_radius"], 2 * jd["body_radius"],
                           jd["body_height"] + jd["lid_height"]))
    assert validate_alpha(jar_obj, alpha_for_task(OPEN_JAR), BASE_SPEC)

    item_obj = _obj(extent=(ITEM_SIZE,) * 3)
    assert validate_alpha(item_obj, alpha_for_task(HAND_OVER_ITEM), BASE_SPEC)
