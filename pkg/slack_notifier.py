import json
import logging

import requests
import tenacity

LOGGER = logging.getLogger(__name__)
POST_TIMEOUT_SECONDS = 10

headers = {
    'Content-type': 'application/json',
}


@tenacity.retry(stop=tenacity.stop_after_attempt(3),
                wait=tenacity.wait_random_exponential(multiplier=1, max=10),
                retry=tenacity.retry_if_exception_type(requests.RequestException),
                before_sleep=tenacity.before_sleep_log(LOGGER, logging.INFO),
                reraise=True)
def _post(url, message):
    response = requests.post(url, headers=headers, data=json.dumps({'text': message}),
                             timeout=POST_TIMEOUT_SECONDS)
    response.raise_for_status()


def notify_slack(devops_channel_url, message):
    """Log |message| and post it to the webhook, if one is configured.

    Returns:
        True if the message was posted. Failures are logged, never raised.
    """
    logging.info('Slack notification: %s', message)
    if not devops_channel_url:
        logging.warning('No Slack URL provided, logging locally only.')
        return False
    try:
        _post(devops_channel_url, message)
    except requests.RequestException as err:
        logging.warning('Slack notification failed: %s', err)
        return False
    return True


def format_run_completion(command, scenario_name, status, elapsed_seconds, headline=None):
    message = '`%s` on scenario `%s` %s in %.1f s' % (command, scenario_name, status,
                                                     elapsed_seconds)
    if headline:
        message += '\n' + '\n'.join('%s: %s' % item for item in headline.items())
    return message


def notify_run_completion(devops_channel_url, command, scenario_name, status, elapsed_seconds,
                          headline=None):
    return notify_slack(devops_channel_url, format_run_completion(
        command, scenario_name, status, elapsed_seconds, headline))
