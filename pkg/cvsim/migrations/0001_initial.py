# Generated by Django 5.0.8 on 2026-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("created_at", models.DateTimeField(auto_now_add=True, db_index=True)),
                ("updated_at", models.DateTimeField(auto_now=True, db_index=True)),
                (
                    "command",
                    models.CharField(
                        choices=[
                            ("kappa_sweep", "Kappa sweep"),
                            ("threshold_table", "Threshold table"),
                            ("delete_check", "Deletion check"),
                            ("ellipse_plot", "Ellipse plot"),
                            ("gate_demo", "Gate demo"),
                        ],
                        max_length=24,
                    ),
                ),
                (
                    "seed",
                    models.DecimalField(decimal_places=0, default=0, max_digits=20),
                ),
                ("config", models.JSONField(blank=True, default=dict)),
                ("formats", models.JSONField(blank=True, default=list)),
                (
                    "output_dir",
                    models.CharField(blank=True, default="", max_length=500),
                ),
                ("tolerance", models.FloatField(blank=True, null=True)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("PENDING", "Pending"),
                            ("COMPLETED", "Completed"),
                            ("BREACH", "Invariant breach"),
                            ("FAILED", "Failed"),
                        ],
                        default="PENDING",
                        max_length=12,
                    ),
                ),
                (
                    "exit_code",
                    models.PositiveSmallIntegerField(blank=True, null=True),
                ),
                ("metrics", models.JSONField(blank=True, default=dict)),
                ("notes", models.TextField(blank=True, default="")),
            ],
            options={
                "ordering": ["-created_at"],
            },
        ),
    ]
