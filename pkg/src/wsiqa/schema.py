import copy

from wsiqa import prop, validators

LOSS_CHOICES = ["plcc", "mse", "mae"]
ARCHITECTURE_CHOICES = ["mtl", "regressor"]
SPLIT_NAMES = ["train", "val", "test"]


class Fields:

    def __init__(self, base_schema):
        self.base_schema = base_schema

    def all(self):
        return self.specialize()

    def specialize(self, overrides=None, only=None, exclude=None):

        cloned = copy.deepcopy(self.base_schema)

        if overrides:
            for override_name, override_values in overrides.items():

                overridden_prop = cloned[override_name]

                for override_attr, override_value in override_values.items():
                    setattr(overridden_prop, override_attr, override_value)

        if only:

            trimmed = {}

            for field_name in only:
                trimmed[field_name] = cloned[field_name]

            cloned = trimmed

        if exclude:
            for name in exclude:
                if name in cloned:
                    del cloned[name]

        return cloned


class TrainConfigFields(Fields):
    base_schema = {
        "architecture": prop.String(
            "Either K parallel task heads (mtl) or the single-output quality regressor.",
            required=False, default="regressor", validators=[validators.Choices(ARCHITECTURE_CHOICES)],
        ),
        "loss": prop.String(
            "Per-task loss.", required=False, default="plcc", validators=[validators.Choices(LOSS_CHOICES)],
        ),
        "learning_rate": prop.Number(
            "Adam step size; null picks 1e-4 for mtl and 1e-2 for the regressor.", required=False, default=None,
            nullable=True,
            validators=[validators.Range(minimum=0, exclusive_minimum=True)],
        ),
        "batch_size": prop.Integer(
            "Samples per optimizer step.", required=False, default=64, validators=[validators.Range(minimum=1)],
        ),
        "epochs": prop.Integer("Passes over the training split.", required=False, default=30,
                               validators=[validators.Range(minimum=0)]),
        "seed": prop.Integer("Seed for initialization, shuffling and dropout.", required=False, default=0,
                             validators=[validators.Range(minimum=0)]),
        "dropout": prop.Boolean("Apply the dropout schedule while training.", required=False, default=True),
        "task_weights": prop.OneOf(
            [
                prop.String("'equal' gives every task the weight 1/K.", required=False,
                            validators=[validators.Choices(["equal"])]),
                prop.Array(prop.Number(validators=[validators.Range(minimum=0)]), "One weight per task.",
                           required=False),
            ],
            description="Task weights of the multi-task loss.",
            default="equal",
        ),
        "lr_sweep": prop.Boolean("Select the learning rate over 1e-1..1e-5 by validation loss.",
                                 required=False, default=False),
    }

    def __init__(self):
        super().__init__(self.base_schema)


class PipelineConfigFields(Fields):
    base_schema = {
        "seed": prop.Integer("Global seed recorded in every artifact.", required=False, default=0,
                             validators=[validators.Range(minimum=0)]),
        "workers": prop.Integer("Worker processes for batch stages.", required=False, default=None, nullable=True,
                                validators=[validators.Range(minimum=1)]),
        "params": prop.String("Distortion parameter table (JSON).", required=False, default=None, nullable=True,
                              validators=[validators.ExistingPath()]),
        "target_width": prop.Integer("Reference width after resize-and-crop.", required=False, default=512,
                                     validators=[validators.Range(minimum=1)]),
        "target_height": prop.Integer("Reference height after resize-and-crop.", required=False, default=384,
                                      validators=[validators.Range(minimum=1)]),
        "metrics": prop.Array(prop.String(), "Built-in metrics to score.", required=False,
                              default=["PSNR", "SSIM", "MSSSIM", "GMSD"]),
        "he_bins": prop.Integer("Quantile grid size of histogram equalization.", required=False, default=256,
                                validators=[validators.Range(minimum=2)]),
        "split_ratios": prop.Array(
            prop.Number(validators=[validators.Range(minimum=0, maximum=1)]),
            "Train/validation/test share of references.",
            required=False, default=[0.6, 0.2, 0.2],
            validators=[validators.ExactLength(3), validators.UnitSum(1e-9)],
        ),
        "repetitions": prop.Integer("Split-train-test repetitions.", required=False, default=100,
                                    validators=[validators.Range(minimum=1)]),
        "train": prop.Object(TrainConfigFields().all(), "Training stage parameters.", required=False, default=None,
                             nullable=True),
    }

    def __init__(self):
        super().__init__(self.base_schema)


class ProvenanceFields(Fields):
    base_schema = {
        "command": prop.String("Subcommand that wrote the artifact."),
        "config": prop.Object(None, "Effective configuration.", required=False, nullable=True),
        "seed": prop.Integer("Seed that produced the artifact.", nullable=True),
        "inputs": prop.Array(prop.String(), "Input files read."),
        "created_at": prop.DateTime("Write time; excluded from determinism checks."),
    }

    def __init__(self):
        super().__init__(self.base_schema)


class ModelMetadataFields(Fields):
    base_schema = {
        "format_version": prop.Integer("Checkpoint format version."),
        "architecture": prop.String(validators=[validators.Choices(ARCHITECTURE_CHOICES)]),
        "tasks": prop.Array(prop.String(), "Task (head) names in output order."),
        "config": prop.Object(TrainConfigFields().all(), "Training configuration.", required=False, nullable=True),
        "best_epoch": prop.Integer("Epoch of the kept checkpoint (0 before training)."),
        "val_loss": prop.Number("Validation loss of the kept checkpoint.", nullable=True),
        "created_at": prop.DateTime("Write time."),
    }

    def __init__(self):
        super().__init__(self.base_schema)


class EvaluationReportFields(Fields):
    base_schema = {
        "repetitions": prop.Integer(),
        "median_srocc": prop.Number(),
        "median_plcc": prop.Number(),
        "runs_csv": prop.String("Per-run table."),
        "cross_median_srocc": prop.Number(required=False, nullable=True),
        "cross_median_plcc": prop.Number(required=False, nullable=True),
        "per_kind_median_srocc": prop.Object(None, required=False, nullable=True),
        "plcc_mapping": prop.String("Where the logistic mapping is fitted."),
        "seed": prop.Integer(),
        "config": prop.Object(None, required=False, nullable=True),
        "created_at": prop.DateTime(),
    }

    def __init__(self):
        super().__init__(self.base_schema)


class ReliabilityReportFields(Fields):
    base_schema = {
        "images": prop.Integer(),
        "ratings": prop.Integer(),
        "icc": prop.Number(),
        "icc_variant": prop.String(),
        "bootstrap_resamples": prop.Integer(),
        "bootstrap_srocc": prop.Number(),
        "bootstrap_mae": prop.Number(),
        "bootstrap_rmse": prop.Number(),
        "seed": prop.Integer(),
        "created_at": prop.DateTime(),
    }

    def __init__(self):
        super().__init__(self.base_schema)


class ParamTableFields(Fields):
    base_schema = {
        "levels": prop.Object(None, "Five-entry severity ladder per distortion kind name.", required=False,
                              default=None, nullable=True),
        "excluded": prop.Array(prop.String(), "Kinds left out of every plan.", required=False, default=None,
                               nullable=True),
    }

    def __init__(self):
        super().__init__(self.base_schema)
