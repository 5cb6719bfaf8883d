# Generated by Django 4.2.7

from django.db import migrations, models
import django.db.models.deletion
import django.utils.timezone


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('run', 'Run'), ('sweep', 'Sweep'), ('pool', 'Pool'), ('report', 'Report')], max_length=20)),
                ('scenario', models.CharField(blank=True, help_text='Base scenario name', max_length=200)),
                ('seed', models.BigIntegerField(default=0)),
                ('profile', models.CharField(default='quick', max_length=20)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('config', models.JSONField(blank=True, default=dict, help_text='Fully resolved configuration')),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('wall_time', models.FloatField(blank=True, help_text='Wall-clock seconds', null=True)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='AlgorithmSummary',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scenario', models.CharField(max_length=200)),
                ('algorithm', models.CharField(max_length=50)),
                ('replication', models.IntegerField()),
                ('converged_utility', models.FloatField(blank=True, null=True)),
                ('normalized_utility', models.FloatField(blank=True, help_text='Worst algorithm -1, perfect rule +1', null=True)),
                ('rise_time', models.IntegerField(blank=True, null=True)),
                ('post_shift_rise_time', models.IntegerField(blank=True, null=True)),
                ('converged_approval_rate', models.FloatField(blank=True, null=True)),
                ('converged_default_rate', models.FloatField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='summaries', to='lending.experimentrun')),
            ],
            options={
                'ordering': ['run', 'scenario', 'algorithm', 'replication'],
            },
        ),
        migrations.AddIndex(
            model_name='experimentrun',
            index=models.Index(fields=['status', '-created_at'], name='lending_exp_status_6b1f2e_idx'),
        ),
        migrations.AddIndex(
            model_name='experimentrun',
            index=models.Index(fields=['scenario'], name='lending_exp_scenari_0c9d4a_idx'),
        ),
        migrations.AddIndex(
            model_name='algorithmsummary',
            index=models.Index(fields=['scenario', 'algorithm'], name='lending_alg_scenari_3e7a51_idx'),
        ),
    ]
