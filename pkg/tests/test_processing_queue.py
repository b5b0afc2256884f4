from processing_queue import SuiteJob, SuiteStatus, VerificationQueue


def run(queue, job, failures=()):
    queue.mark_running(job)
    queue.mark_completed(job, {'rows': [{'n': 1}], 'failures': list(failures)})


def test_jobs_run_in_order():
    queue = VerificationQueue(['Shapes', ' gw '])
    assert [j.name for j in queue.get_all_jobs()] == ['shapes', 'gw']
    first = queue.get_next_job()
    run(queue, first)
    assert first.status == SuiteStatus.PASSED
    assert queue.get_next_job().name == 'gw'


def test_queue_drains():
    queue = VerificationQueue(['shapes'])
    run(queue, queue.get_next_job())
    assert queue.get_next_job() is None
    assert queue.get_queue_status()['passed'] == 1


def test_failures_give_exit_code_one():
    queue = VerificationQueue(['shapes', 'gw'])
    run(queue, queue.get_next_job(), ['count mismatch'])
    run(queue, queue.get_next_job())
    status = queue.get_queue_status()
    assert status['failed'] == 1 and status['passed'] == 1
    assert queue.exit_code() == 1


def test_errors_outrank_failures():
    queue = VerificationQueue(['shapes', 'trees', 'perc'])
    run(queue, queue.get_next_job(), ['bad'])
    trees = queue.get_next_job()
    queue.mark_running(trees)
    queue.mark_error(trees, 'budget exceeded', 4)
    perc = queue.get_next_job()
    queue.mark_running(perc)
    queue.mark_error(perc, 'bad p', 2)
    assert trees.status == SuiteStatus.ERROR
    assert queue.exit_code() == 4


def test_clean_queue_exits_zero():
    queue = VerificationQueue(['gw'])
    run(queue, queue.get_next_job())
    assert queue.exit_code() == 0


def test_elapsed_time():
    job = SuiteJob('gw')
    assert job.elapsed == 0.0
    queue = VerificationQueue()
    job = queue.add_job('gw', {'n': 3})
    run(queue, job)
    assert job.options == {'n': 3}
    assert job.elapsed >= 0.0
