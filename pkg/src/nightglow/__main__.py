from nightglow.cli import run

run()
