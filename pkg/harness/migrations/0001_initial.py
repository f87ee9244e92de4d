# Generated by Django 4.2.23 on 2026-10-19 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('config_json', models.TextField(help_text='The fully-defaulted configuration, as canonical JSON.', verbose_name='Configuration')),
                ('config_digest', models.CharField(db_index=True, help_text='Short SHA-256 digest of the canonical configuration.', max_length=16, verbose_name='Configuration Digest')),
                ('algorithm', models.CharField(choices=[('fedpbc', 'FedPBC'), ('fedavg', 'FedAvg'), ('fedavg_all', 'FedAvg (all clients weighted)'), ('fedavg_known_p', 'FedAvg (known probabilities)'), ('mifa', 'MIFA')], max_length=32, verbose_name='Algorithm')),
                ('link_scheme', models.CharField(choices=[('bernoulli', 'Bernoulli'), ('bernoulli_time_varying', 'Bernoulli, time-varying'), ('markov', 'Markov'), ('markov_time_varying', 'Markov, time-varying'), ('cyclic', 'Cyclic'), ('cyclic_reset', 'Cyclic with periodic reset'), ('k_of_m', 'Uniform k of m')], max_length=32, verbose_name='Link Scheme')),
                ('seed', models.IntegerField(help_text='Root seed of the run.', verbose_name='Seed')),
                ('rounds', models.PositiveIntegerField(help_text='Number of communication rounds that were run.', verbose_name='Rounds')),
                ('final_distance', models.FloatField(help_text='Distance of the server model to the global optimum after the last round.', verbose_name='Final Distance')),
                ('mean_distance_last_100', models.FloatField(verbose_name='Mean Distance (last 100 rounds)')),
                ('output_path', models.CharField(blank=True, max_length=500, verbose_name='Output File')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
